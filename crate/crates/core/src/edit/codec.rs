use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Latent images share the pixel buffer type.
pub type LatentImage = ImageBuffer;

/// Map between RGB images and the latent space the edit oracle works in.
pub trait ImageCodec: Send + Sync {
    fn encode(&self, image: &ImageBuffer) -> Result<LatentImage>;
    fn decode(&self, latent: &LatentImage) -> Result<ImageBuffer>;
    /// Transpose of the encoder's Jacobian: latent gradient to RGB pixel gradient.
    fn backward(&self, grad: &LatentImage, width: usize, height: usize) -> Result<ImageBuffer>;
    fn name(&self) -> &str;
}

/// Latent = RGB pixels.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityCodec;

impl ImageCodec for IdentityCodec {
    fn encode(&self, image: &ImageBuffer) -> Result<LatentImage> {
        Ok(image.rgb())
    }

    fn decode(&self, latent: &LatentImage) -> Result<ImageBuffer> {
        Ok(latent.rgb())
    }

    fn backward(&self, grad: &LatentImage, width: usize, height: usize) -> Result<ImageBuffer> {
        if grad.width() != width || grad.height() != height || grad.channels() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "latent gradient {} for a {width}x{height} image",
                grad.shape_string()
            )));
        }
        Ok(grad.clone())
    }

    fn name(&self) -> &str {
        "identity"
    }
}

/// Area-average downsampling by an integer factor; decodes by pixel replication.
#[derive(Clone, Copy, Debug)]
pub struct DownsampleCodec {
    pub factor: usize,
}

impl Default for DownsampleCodec {
    fn default() -> Self {
        Self { factor: 8 }
    }
}

impl DownsampleCodec {
    fn check(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        let f = self.factor;
        if f == 0 || width % f != 0 || height % f != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} image is not divisible by codec factor {f}"
            )));
        }
        Ok((width / f, height / f))
    }
}

impl ImageCodec for DownsampleCodec {
    fn encode(&self, image: &ImageBuffer) -> Result<LatentImage> {
        let (lw, lh) = self.check(image.width(), image.height())?;
        let f = self.factor;
        let norm = 1.0 / (f * f) as f64;
        let mut out = ImageBuffer::new(lw, lh, 3);
        for y in 0..image.height() {
            for x in 0..image.width() {
                let src = image.pixel(x, y);
                let dst = out.pixel_mut(x / f, y / f);
                for ch in 0..3 {
                    dst[ch] += src[ch] * norm;
                }
            }
        }
        Ok(out)
    }

    fn decode(&self, latent: &LatentImage) -> Result<ImageBuffer> {
        let f = self.factor;
        let mut out = ImageBuffer::new(latent.width() * f, latent.height() * f, 3);
        for y in 0..out.height() {
            for x in 0..out.width() {
                let src = latent.pixel(x / f, y / f);
                out.pixel_mut(x, y).copy_from_slice(&src[..3]);
            }
        }
        Ok(out)
    }

    fn backward(&self, grad: &LatentImage, width: usize, height: usize) -> Result<ImageBuffer> {
        let (lw, lh) = self.check(width, height)?;
        if grad.width() != lw || grad.height() != lh || grad.channels() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "latent gradient {} for a {width}x{height} image",
                grad.shape_string()
            )));
        }
        let f = self.factor;
        let norm = 1.0 / (f * f) as f64;
        let mut out = ImageBuffer::new(width, height, 3);
        for y in 0..height {
            for x in 0..width {
                let g = grad.pixel(x / f, y / f);
                let dst = out.pixel_mut(x, y);
                for ch in 0..3 {
                    dst[ch] = g[ch] * norm;
                }
            }
        }
        Ok(out)
    }

    fn name(&self) -> &str {
        "downsample"
    }
}

/// Codec by name: `identity` or `downsample[:factor]`.
pub fn codec_by_name(spec: &str) -> Result<Box<dyn ImageCodec>> {
    let (name, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match name {
        "identity" => Ok(Box::new(IdentityCodec)),
        "downsample" => {
            let factor = if arg.is_empty() {
                8
            } else {
                arg.parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad downsample factor '{arg}'")))?
            };
            Ok(Box::new(DownsampleCodec { factor }))
        }
        _ => Err(Error::InvalidArgument(format!("unknown codec '{spec}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> ImageBuffer {
        ImageBuffer::from_vec(w, h, c, (0..w * h * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn dot(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn identity_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let img = random(&mut rng, 5, 4, 3);
        let c = IdentityCodec;
        assert_eq!(c.decode(&c.encode(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn downsample_backward_is_the_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = DownsampleCodec { factor: 4 };
        let x = random(&mut rng, 16, 8, 3);
        let g = random(&mut rng, 4, 2, 3);
        let lhs = dot(&c.encode(&x).unwrap(), &g);
        let rhs = dot(&x, &c.backward(&g, 16, 8).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn downsample_of_constant_round_trips() {
        let c = DownsampleCodec::default();
        let img = ImageBuffer::filled(16, 16, 4, 0.25);
        let back = c.decode(&c.encode(&img).unwrap()).unwrap();
        assert!(back.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(c.encode(&ImageBuffer::new(12, 16, 3)).is_err());
    }

    #[test]
    fn codec_names() {
        assert_eq!(codec_by_name("identity").unwrap().name(), "identity");
        assert_eq!(codec_by_name("downsample:4").unwrap().name(), "downsample");
        assert!(codec_by_name("vae").is_err());
    }
}
