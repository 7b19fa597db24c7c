use std::time::Duration;

use super::codec::{ImageCodec, LatentImage};
use super::wire;
use crate::error::{Error, OracleError, Result};
use crate::image::{hsv_to_rgb, rgb_to_hsv, ImageBuffer};
use crate::remote;

/// Everything an edit oracle is given for one noise prediction.
pub struct OracleQuery<'a> {
    /// Noisy latent `z_t`.
    pub noisy: &'a LatentImage,
    pub t: f64,
    pub alpha_bar: f64,
    /// Latent of the original, pre-edit render of this view.
    pub condition: &'a LatentImage,
    pub prompt: &'a str,
    pub text_scale: f64,
    pub image_scale: f64,
    /// The noise that was injected into `noisy`. Procedural stand-ins use it to
    /// recover the clean latent; a real diffusion model ignores it.
    pub noise: &'a LatentImage,
    pub codec: &'a dyn ImageCodec,
    pub background: [f64; 3],
    /// Pixel-space coverage (alpha) of the original render, row-major, when known.
    pub coverage: Option<&'a [f64]>,
}

/// Predicts the noise contained in a noisy latent, conditioned on an image and
/// a text instruction.
pub trait EditOracle: Send + Sync {
    fn predict_noise(&self, query: &OracleQuery<'_>) -> std::result::Result<LatentImage, OracleError>;
    fn name(&self) -> &str;
}

/// Returns the injected noise unchanged: a no-op edit.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityOracle;

impl EditOracle for IdentityOracle {
    fn predict_noise(&self, q: &OracleQuery<'_>) -> std::result::Result<LatentImage, OracleError> {
        Ok(q.noise.clone())
    }

    fn name(&self) -> &str {
        "identity"
    }
}

/// Pixel-space edits used by [`ProceduralOracle`].
#[derive(Clone, Debug, PartialEq)]
pub enum ProceduralEdit {
    /// Set the hue (degrees) of every foreground pixel, raising saturation to
    /// at least `min_saturation`.
    HueShift { hue: f64, min_saturation: f64 },
    /// Add `delta` to every foreground channel.
    Brightness { delta: f64 },
    /// Multiply the top `fraction` of the silhouette's rows by `factor`.
    RegionDarken { fraction: f64, factor: f64 },
    /// Unsharp mask followed by colour quantisation to `levels` levels.
    Sharpen { amount: f64, levels: usize },
    /// A fixed target image, whatever the condition.
    Fixed(ImageBuffer),
}

fn box_blur3(img: &ImageBuffer) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let mut out = ImageBuffer::new(w, h, 3);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            let mut n = 0.0;
            for sy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for sx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let p = img.pixel(sx, sy);
                    for ch in 0..3 {
                        acc[ch] += p[ch];
                    }
                    n += 1.0;
                }
            }
            let o = out.pixel_mut(x, y);
            for ch in 0..3 {
                o[ch] = acc[ch] / n;
            }
        }
    }
    out
}

impl ProceduralEdit {
    fn edit_pixel(&self, rgb: [f64; 3]) -> [f64; 3] {
        match self {
            ProceduralEdit::HueShift { hue, min_saturation } => {
                let (_, s, v) = rgb_to_hsv(&rgb);
                hsv_to_rgb(*hue, s.max(*min_saturation), v)
            }
            ProceduralEdit::Brightness { delta } => rgb.map(|v| (v + delta).clamp(0.0, 1.0)),
            ProceduralEdit::RegionDarken { factor, .. } => rgb.map(|v| v * factor),
            ProceduralEdit::Sharpen { .. } | ProceduralEdit::Fixed(_) => rgb,
        }
    }

    /// Target image for a condition image (RGB, pixel space).
    ///
    /// With `coverage`, each pixel is treated as a blend `a·f + (1 − a)·b` of a
    /// foreground colour and the background; the edit is applied to `f` and the
    /// blend recomposed, so anti-aliased silhouette edges keep their coverage.
    /// Without it, pixels that differ from the background count as fully covered.
    pub fn target(&self, cond: &ImageBuffer, background: [f64; 3], coverage: Option<&[f64]>) -> ImageBuffer {
        let (w, h) = (cond.width(), cond.height());
        let cover: Vec<f64> = match coverage {
            Some(a) if a.len() == w * h => a.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            _ => cond
                .data()
                .chunks(cond.channels())
                .map(|p| {
                    if (0..3).any(|ch| (p[ch] - background[ch]).abs() > 1e-3) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        };
        let mut out = cond.rgb();
        match self {
            ProceduralEdit::Fixed(img) => return img.rgb(),
            ProceduralEdit::Sharpen { amount, levels } => {
                let blurred = box_blur3(&out);
                let q = (*levels).max(2) as f64 - 1.0;
                for ((p, b), &a) in out.data_mut().chunks_mut(3).zip(blurred.data().chunks(3)).zip(&cover) {
                    if a > 0.5 {
                        for ch in 0..3 {
                            let s = (p[ch] + amount * (p[ch] - b[ch])).clamp(0.0, 1.0);
                            p[ch] = (s * q).round() / q;
                        }
                    }
                }
                return out;
            }
            _ => {}
        }
        let rows = match self {
            ProceduralEdit::RegionDarken { fraction, .. } => {
                let covered: Vec<usize> = (0..h).filter(|&y| (0..w).any(|x| cover[y * w + x] > 0.5)).collect();
                match (covered.first(), covered.last()) {
                    (Some(&top), Some(&bottom)) => top as f64..top as f64 + fraction * (bottom + 1 - top) as f64,
                    _ => 0.0..0.0,
                }
            }
            _ => 0.0..h as f64,
        };
        for y in 0..h {
            if !rows.contains(&(y as f64)) {
                continue;
            }
            for x in 0..w {
                let a = cover[y * w + x];
                if a < 1e-3 {
                    continue;
                }
                let p = out.pixel_mut(x, y);
                let fg: [f64; 3] = std::array::from_fn(|ch| (background[ch] + (p[ch] - background[ch]) / a).clamp(0.0, 1.0));
                let edited = self.edit_pixel(fg);
                for ch in 0..3 {
                    p[ch] = a * edited[ch] + (1.0 - a) * background[ch];
                }
            }
        }
        out
    }
}

/// Stand-in for an instruction-following diffusion model.
///
/// Recovers the clean latent `z₀` from the injected noise, builds a pixel-space
/// target from the condition image and returns `ε̂ = ε + κ·√ᾱ·(z₀ − target)`
/// with `κ = gain·s_T/100`, so descending the SDS gradient pulls the render
/// toward the target.
#[derive(Clone, Debug)]
pub struct ProceduralOracle {
    pub edit: ProceduralEdit,
    pub gain: f64,
    name: String,
}

impl ProceduralOracle {
    pub fn new(name: impl Into<String>, edit: ProceduralEdit, gain: f64) -> Self {
        Self {
            edit,
            gain,
            name: name.into(),
        }
    }
}

impl EditOracle for ProceduralOracle {
    fn predict_noise(&self, q: &OracleQuery<'_>) -> std::result::Result<LatentImage, OracleError> {
        let bad = |e: Error| OracleError::Malformed(e.to_string());
        let kappa = self.gain * q.text_scale / 100.0;
        if kappa == 0.0 {
            return Ok(q.noise.clone());
        }
        let cond = q.codec.decode(q.condition).map_err(bad)?;
        let target = q
            .codec
            .encode(&self.edit.target(&cond, q.background, q.coverage))
            .map_err(bad)?;
        let a = q.alpha_bar;
        let (sa, sb) = (a.sqrt(), (1.0 - a).sqrt());
        if !q.noisy.same_shape(&target) || !q.noisy.same_shape(q.noise) {
            return Err(OracleError::Malformed(format!(
                "latent {} does not match target {}",
                q.noisy.shape_string(),
                target.shape_string()
            )));
        }
        let data = q
            .noisy
            .data()
            .iter()
            .zip(q.noise.data())
            .zip(target.data())
            .map(|((&zt, &e), &g)| {
                let z0 = if sa > 0.0 { (zt - sb * e) / sa } else { g };
                e + kappa * sa * (z0 - g)
            })
            .collect();
        ImageBuffer::from_vec(q.noisy.width(), q.noisy.height(), q.noisy.channels(), data).map_err(bad)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Client for a noise-prediction service speaking the binary `/edit-noise` protocol.
#[derive(Clone, Debug)]
pub struct RemoteOracle {
    pub url: String,
    pub timeout: Duration,
}

impl RemoteOracle {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            timeout,
        }
    }
}

impl EditOracle for RemoteOracle {
    fn predict_noise(&self, q: &OracleQuery<'_>) -> std::result::Result<LatentImage, OracleError> {
        let body = wire::encode_edit_request(&wire::EditRequest {
            width: q.noisy.width() as u32,
            height: q.noisy.height() as u32,
            channels: q.noisy.channels() as u32,
            t: q.t as f32,
            text_scale: q.text_scale as f32,
            image_scale: q.image_scale as f32,
            prompt: q.prompt.to_owned(),
            noisy: q.noisy.data().iter().map(|&v| v as f32).collect(),
            condition: q.condition.data().iter().map(|&v| v as f32).collect(),
        });
        let url = format!("{}/edit-noise", self.url.trim_end_matches('/'));
        let reply = remote::post_bytes(&url, &body, self.timeout)?;
        let values = wire::decode_f32_array(&reply, q.noisy.data().len())?;
        ImageBuffer::from_vec(
            q.noisy.width(),
            q.noisy.height(),
            q.noisy.channels(),
            values.into_iter().map(f64::from).collect(),
        )
        .map_err(|e| OracleError::Malformed(e.to_string()))
    }

    fn name(&self) -> &str {
        "remote"
    }
}

fn color_hue(word: &str) -> Option<f64> {
    Some(match word {
        "red" => 0.0,
        "orange" => 30.0,
        "yellow" => 60.0,
        "green" => 120.0,
        "cyan" => 180.0,
        "blue" => 240.0,
        "purple" => 270.0,
        "magenta" => 300.0,
        "pink" => 330.0,
        _ => return None,
    })
}

/// Built-in oracle from a `name[:params]` spec:
///
/// - `identity`
/// - `hue_shift:<colour word | degrees>`
/// - `brightness:<delta>`
/// - `region_darken[:<fraction>]`
/// - `sharpen[:<levels>]`
/// - `remote:<url>`
pub fn builtin_oracle(spec: &str, timeout: Duration) -> Result<Box<dyn EditOracle>> {
    let (name, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let num = |default: f64| -> Result<f64> {
        if arg.is_empty() {
            Ok(default)
        } else {
            arg.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad parameter '{arg}' for oracle '{name}'")))
        }
    };
    let oracle: Box<dyn EditOracle> = match name {
        "identity" => Box::new(IdentityOracle),
        "hue_shift" => {
            let hue = match color_hue(&arg.to_ascii_lowercase()) {
                Some(h) => h,
                None if arg.is_empty() => 0.0,
                None => num(0.0)?.rem_euclid(360.0),
            };
            Box::new(ProceduralOracle::new(
                name,
                ProceduralEdit::HueShift {
                    hue,
                    min_saturation: 0.75,
                },
                1.0,
            ))
        }
        "brightness" => Box::new(ProceduralOracle::new(
            name,
            ProceduralEdit::Brightness { delta: num(0.2)? },
            1.0,
        )),
        "region_darken" => Box::new(ProceduralOracle::new(
            name,
            ProceduralEdit::RegionDarken {
                fraction: num(0.2)?,
                factor: 0.4,
            },
            1.0,
        )),
        "sharpen" => Box::new(ProceduralOracle::new(
            name,
            ProceduralEdit::Sharpen {
                amount: 0.5,
                levels: num(16.0)? as usize,
            },
            1.0,
        )),
        "remote" if !arg.is_empty() => Box::new(RemoteOracle::new(arg, timeout)),
        "remote" => return Err(Error::InvalidArgument("remote oracle needs a URL".into())),
        _ => return Err(Error::InvalidArgument(format!("unknown oracle '{name}'"))),
    };
    Ok(oracle)
}
