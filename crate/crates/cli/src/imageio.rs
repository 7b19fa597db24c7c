//! 8-bit PNG conversion for [`ImageBuffer`]s. Values are written as-is (no gamma).

use std::path::Path;

use gsedit_core::ImageBuffer;
use image::{DynamicImage, ImageError, Rgb32FImage, RgbImage, RgbaImage};

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Saves an RGB or RGBA image; other channel counts are rejected.
pub fn save_png(img: &ImageBuffer, path: &Path) -> Result<(), ImageError> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    let dynamic = match img.channels() {
        3 => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("buffer matches its shape")),
        4 => DynamicImage::ImageRgba8(RgbaImage::from_raw(w, h, bytes).expect("buffer matches its shape")),
        c => {
            return Err(ImageError::Unsupported(image::error::UnsupportedError::from_format_and_kind(
                image::error::ImageFormatHint::Unknown,
                image::error::UnsupportedErrorKind::GenericFeature(format!("{c}-channel image")),
            )))
        }
    };
    dynamic.save(path)
}

/// Loads any supported image as RGB in `[0, 1]`.
pub fn load_rgb(path: &Path) -> Result<ImageBuffer, ImageError> {
    let img: Rgb32FImage = image::open(path)?.into_rgb32f();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(f64::from).collect();
    Ok(ImageBuffer::from_vec(w, h, 3, data).expect("decoder output matches its shape"))
}
