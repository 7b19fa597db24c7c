use crate::error::{Error, Result};

/// Row-major `height x width x channels` float image.
///
/// Renders, targets, latents and pixel-space gradients all share this type;
/// only renders are guaranteed to stay inside `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Image where every pixel holds `pixel` (its length sets the channel count).
    pub fn from_pixel(width: usize, height: usize, pixel: &[f64]) -> Self {
        let mut data = Vec::with_capacity(width * height * pixel.len());
        for _ in 0..width * height {
            data.extend_from_slice(pixel);
        }
        Self {
            width,
            height,
            channels: pixel.len(),
            data,
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data"));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// First three channels as a new RGB image.
    pub fn rgb(&self) -> ImageBuffer {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.width * self.height * 3);
        for px in self.data.chunks_exact(self.channels) {
            for c in 0..3 {
                data.push(px.get(c).copied().unwrap_or(0.0));
            }
        }
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    /// Alpha channel of an RGBA image; all ones for RGB.
    pub fn alpha(&self) -> Vec<f64> {
        if self.channels < 4 {
            return vec![1.0; self.width * self.height];
        }
        self.data.chunks_exact(self.channels).map(|p| p[3]).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageBuffer {
        ImageBuffer {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn scaled(&self, k: f64) -> ImageBuffer {
        self.map(|v| v * k)
    }

    pub fn zip_map(&self, other: &ImageBuffer, mut f: impl FnMut(f64, f64) -> f64) -> Result<ImageBuffer> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(format!(
                "{} vs {}",
                self.shape_string(),
                other.shape_string()
            )));
        }
        Ok(ImageBuffer {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            width: self.width,
            height: self.height,
            channels: self.channels,
        })
    }

    /// Mean absolute difference over the first three channels.
    pub fn mean_abs_diff_rgb(&self, other: &ImageBuffer) -> Result<f64> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::ShapeMismatch(format!(
                "{} vs {}",
                self.shape_string(),
                other.shape_string()
            )));
        }
        let mut sum = 0.0;
        for (a, b) in self
            .data
            .chunks_exact(self.channels)
            .zip(other.data.chunks_exact(other.channels))
        {
            for c in 0..3 {
                sum += (a[c] - b[c]).abs();
            }
        }
        Ok(sum / (self.width * self.height * 3) as f64)
    }

    /// Peak signal-to-noise ratio in dB over RGB, peak value 1.
    pub fn psnr_rgb(&self, other: &ImageBuffer) -> Result<f64> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::ShapeMismatch(format!(
                "{} vs {}",
                self.shape_string(),
                other.shape_string()
            )));
        }
        let mut sse = 0.0;
        for (a, b) in self
            .data
            .chunks_exact(self.channels)
            .zip(other.data.chunks_exact(other.channels))
        {
            for c in 0..3 {
                sse += (a[c] - b[c]).powi(2);
            }
        }
        let mse = sse / (self.width * self.height * 3) as f64;
        Ok(-10.0 * mse.max(1e-20).log10())
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at `i + 0.5`).
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let a = self.pixel(x0, y0)[c] * (1.0 - tx) + self.pixel(x1, y0)[c] * tx;
            let b = self.pixel(x0, y1)[c] * (1.0 - tx) + self.pixel(x1, y1)[c] * tx;
            *o = a * (1.0 - ty) + b * ty;
        }
    }
}

/// Rec. 709 luma of an RGB triple.
pub fn luminance(rgb: &[f64]) -> f64 {
    0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]
}

/// RGB in `[0,1]` to (hue degrees in `[0,360)`, saturation, value).
pub fn rgb_to_hsv(rgb: &[f64]) -> (f64, f64, f64) {
    let (r, g, b) = (rgb[0], rgb[1], rgb[2]);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta <= 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let sat = if max <= 0.0 { 0.0 } else { delta / max };
    (hue.rem_euclid(360.0), sat, max)
}

pub fn hsv_to_rgb(hue: f64, sat: f64, value: f64) -> [f64; 3] {
    let c = value * sat;
    let h = hue.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = value - c;
    [r + m, g + m, b + m]
}
