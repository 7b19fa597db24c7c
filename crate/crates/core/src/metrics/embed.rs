use std::sync::OnceLock;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::edit::wire;
use crate::error::{Error, Result};
use crate::image::{luminance, rgb_to_hsv, ImageBuffer};
use crate::remote;

/// Maps images and text into a shared vector space.
pub trait EmbeddingProvider: Send + Sync {
    /// Embedding length; 0 while unknown (remote providers learn it on first use).
    fn dimension(&self) -> usize;
    fn embed_image(&self, image: &ImageBuffer) -> Result<Vec<f64>>;
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;
    fn name(&self) -> &str;
}

/// Side of the downsampled luminance map.
pub const TOY_LUMA_SIDE: usize = 8;
/// Hue histogram bins (30° each, centred on multiples of 30°).
pub const TOY_HUE_BINS: usize = 12;
pub const TOY_DIM: usize = TOY_LUMA_SIDE * TOY_LUMA_SIDE + TOY_HUE_BINS;
/// Seed mixed into the hash of unknown words.
const TOY_WORD_SEED: u64 = 0x6773_6564_6974;

/// Deterministic stand-in for a learned image/text embedder.
///
/// Images map to an 8×8 area-averaged luminance map and a saturation-weighted
/// 12-bin hue histogram. Each block is scaled to unit length, then the
/// concatenation is normalised. Colour words in text map onto their hue
/// bin; brightness words onto the uniform luminance direction; filler words
/// are ignored; any other word maps to a unit vector drawn from its FNV-1a hash.
#[derive(Clone, Copy, Debug, Default)]
pub struct ToyEmbedder;

/// Hue bin of a colour word.
pub fn toy_color_bin(word: &str) -> Option<usize> {
    let hue = match word {
        "red" => 0.0,
        "orange" => 30.0,
        "yellow" => 60.0,
        "lime" => 90.0,
        "green" => 120.0,
        "teal" => 150.0,
        "cyan" => 180.0,
        "azure" => 210.0,
        "blue" => 240.0,
        "purple" | "violet" => 270.0,
        "magenta" => 300.0,
        "pink" | "rose" => 330.0,
        _ => return None,
    };
    Some(hue_bin(hue))
}

fn hue_bin(hue: f64) -> usize {
    ((hue / 30.0).round() as usize) % TOY_HUE_BINS
}

const FILLER: &[&str] = &["a", "an", "the", "make", "it", "look", "like", "turn", "into", "of", "with", "and"];
const NEUTRAL: &[&str] = &["gray", "grey", "white", "black", "silver", "bright", "dark"];

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in &mut v {
            *x /= n;
        }
    }
    v
}

impl ToyEmbedder {
    fn word_vector(word: &str) -> Option<Vec<f64>> {
        if FILLER.contains(&word) {
            return None;
        }
        let mut v = vec![0.0; TOY_DIM];
        if let Some(bin) = toy_color_bin(word) {
            v[TOY_LUMA_SIDE * TOY_LUMA_SIDE + bin] = 1.0;
        } else if NEUTRAL.contains(&word) {
            for x in &mut v[..TOY_LUMA_SIDE * TOY_LUMA_SIDE] {
                *x = 1.0 / TOY_LUMA_SIDE as f64;
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word.as_bytes()) ^ TOY_WORD_SEED);
            for x in &mut v {
                *x = StandardNormal.sample(&mut rng);
            }
            v = normalize(v);
        }
        Some(v)
    }
}

impl EmbeddingProvider for ToyEmbedder {
    fn dimension(&self) -> usize {
        TOY_DIM
    }

    fn embed_image(&self, image: &ImageBuffer) -> Result<Vec<f64>> {
        if image.channels() < 3 || image.width() == 0 || image.height() == 0 {
            return Err(Error::Embedding(format!("cannot embed a {} image", image.shape_string())));
        }
        let (w, h) = (image.width(), image.height());
        let side = TOY_LUMA_SIDE;
        let mut luma = vec![0.0; side * side];
        let mut count = vec![0.0; side * side];
        let mut hist = vec![0.0; TOY_HUE_BINS];
        for y in 0..h {
            for x in 0..w {
                let p = image.pixel(x, y);
                let cell = (y * side / h) * side + x * side / w;
                luma[cell] += luminance(p);
                count[cell] += 1.0;
                let (hue, sat, _) = rgb_to_hsv(p);
                hist[hue_bin(hue)] += sat;
            }
        }
        for (l, c) in luma.iter_mut().zip(&count) {
            if *c > 0.0 {
                *l /= c;
            }
        }
        let mut v = normalize(luma);
        v.extend(normalize(hist));
        Ok(normalize(v))
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; TOY_DIM];
        for word in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
        {
            if let Some(wv) = Self::word_vector(&word) {
                for (a, b) in v.iter_mut().zip(wv) {
                    *a += b;
                }
            }
        }
        Ok(normalize(v))
    }

    fn name(&self) -> &str {
        "toy"
    }
}

/// Client for an embedding service speaking `/embed-image` and `/embed-text`.
///
/// Replies are raw little-endian f32 vectors. All replies must share the
/// length of the first one.
#[derive(Debug)]
pub struct RemoteEmbedder {
    url: String,
    timeout: Duration,
    dim: OnceLock<usize>,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            timeout,
            dim: OnceLock::new(),
        }
    }

    fn call(&self, path: &str, body: &[u8]) -> Result<Vec<f64>> {
        let url = format!("{}/{path}", self.url.trim_end_matches('/'));
        let reply = remote::post_bytes(&url, body, self.timeout).map_err(|e| Error::Embedding(e.to_string()))?;
        if reply.is_empty() || reply.len() % 4 != 0 {
            return Err(Error::Embedding(format!("{url}: reply of {} bytes is not an f32 vector", reply.len())));
        }
        let n = *self.dim.get_or_init(|| reply.len() / 4);
        let values = wire::decode_f32_array(&reply, n).map_err(|e| Error::Embedding(format!("{url}: {e}")))?;
        Ok(values.into_iter().map(f64::from).collect())
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dim.get().copied().unwrap_or(0)
    }

    fn embed_image(&self, image: &ImageBuffer) -> Result<Vec<f64>> {
        let data: Vec<f32> = image.data().iter().map(|&v| v as f32).collect();
        let body = wire::encode_image_embed_request(
            image.width() as u32,
            image.height() as u32,
            image.channels() as u32,
            &data,
        );
        self.call("embed-image", &body)
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        self.call("embed-text", &wire::encode_text_embed_request(text))
    }

    fn name(&self) -> &str {
        "remote"
    }
}

/// Provider from a spec: `toy` or `remote:<url>`.
pub fn embedder_by_name(spec: &str, timeout: Duration) -> Result<Box<dyn EmbeddingProvider>> {
    match spec.split_once(':') {
        None if spec == "toy" => Ok(Box::new(ToyEmbedder)),
        Some(("remote", url)) if !url.is_empty() => Ok(Box::new(RemoteEmbedder::new(url, timeout))),
        _ => Err(Error::InvalidArgument(format!("unknown embedder '{spec}'"))),
    }
}
