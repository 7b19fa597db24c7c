//! Embedding-space edit metrics.
//!
//! A metric is `None` (serialised as `null`) when one of its vectors has
//! norm below [`MIN_NORM`], so a no-op edit is not mistaken for an orthogonal one.

mod embed;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

pub use embed::{
    embedder_by_name, fnv1a, toy_color_bin, EmbeddingProvider, RemoteEmbedder, ToyEmbedder, TOY_DIM, TOY_HUE_BINS,
    TOY_LUMA_SIDE,
};

/// Vectors shorter than this make a metric undefined.
pub const MIN_NORM: f64 = 1e-12;

/// Cosine similarity, `None` if either vector is (numerically) zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "cosine of vectors with different lengths");
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < MIN_NORM || nb < MIN_NORM {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn same_dim(vs: &[&[f64]]) -> Result<()> {
    if vs.windows(2).all(|w| w[0].len() == w[1].len()) {
        Ok(())
    } else {
        Err(Error::Embedding("provider returned embeddings of different lengths".into()))
    }
}

/// Cosine between image offset `x − x̂` and text offset `T − T̂`, from embeddings.
pub fn directional_similarity_embedded(x: &[f64], x_hat: &[f64], t: &[f64], t_hat: &[f64]) -> Result<Option<f64>> {
    same_dim(&[x, x_hat, t, t_hat])?;
    Ok(cosine(&sub(x, x_hat), &sub(t, t_hat)))
}

/// Cosine between the edit offsets of two adjacent frames, from embeddings.
pub fn directional_consistency_embedded(x0: &[f64], x1: &[f64], x0_hat: &[f64], x1_hat: &[f64]) -> Result<Option<f64>> {
    same_dim(&[x0, x1, x0_hat, x1_hat])?;
    Ok(cosine(&sub(x0_hat, x0), &sub(x1_hat, x1)))
}

/// Directional similarity of an original/edited image pair and their captions.
pub fn directional_similarity(
    x: &ImageBuffer,
    x_hat: &ImageBuffer,
    caption: &str,
    caption_hat: &str,
    provider: &dyn EmbeddingProvider,
) -> Result<Option<f64>> {
    directional_similarity_embedded(
        &provider.embed_image(x)?,
        &provider.embed_image(x_hat)?,
        &provider.embed_text(caption)?,
        &provider.embed_text(caption_hat)?,
    )
}

/// Directional consistency of two adjacent frames before (`x0`, `x1`) and after the edit.
pub fn directional_consistency(
    x0: &ImageBuffer,
    x1: &ImageBuffer,
    x0_hat: &ImageBuffer,
    x1_hat: &ImageBuffer,
    provider: &dyn EmbeddingProvider,
) -> Result<Option<f64>> {
    directional_consistency_embedded(
        &provider.embed_image(x0)?,
        &provider.embed_image(x1)?,
        &provider.embed_image(x0_hat)?,
        &provider.embed_image(x1_hat)?,
    )
}

/// Cosine between an edited render and a generative prompt.
pub fn text_similarity(x_hat: &ImageBuffer, prompt: &str, provider: &dyn EmbeddingProvider) -> Result<Option<f64>> {
    let (a, b) = (provider.embed_image(x_hat)?, provider.embed_text(prompt)?);
    same_dim(&[&a, &b])?;
    Ok(cosine(&a, &b))
}

/// Mean of the defined values; `None` when none is defined.
pub fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Per-view metric values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerView {
    pub clip_sim: Vec<Option<f64>>,
    /// One entry per adjacent pair along the camera path.
    pub clip_cons: Vec<Option<f64>>,
    pub clip_text: Vec<Option<f64>>,
}

/// Edit quality report.
///
/// Aggregates are means over the defined per-view values. `timings_s` is only
/// serialised when non-empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub provider: String,
    pub clip_sim: Option<f64>,
    pub clip_cons: Option<f64>,
    pub clip_text: Option<f64>,
    pub per_view: PerView,
    #[serde(default)]
    pub timings_s: BTreeMap<String, f64>,
}

/// Captions and prompt of an edit evaluation.
#[derive(Clone, Debug)]
pub struct EditTexts<'a> {
    /// Caption of the original object, e.g. "a gray sphere".
    pub caption: &'a str,
    /// Caption of the edited object, e.g. "a red sphere".
    pub edited_caption: &'a str,
    /// Generative prompt used for the text similarity, e.g. "a red sphere".
    pub generative_prompt: &'a str,
}

/// Evaluates all metrics over views rendered along a camera path.
///
/// `originals[i]` and `edited[i]` come from the same camera; consistency
/// uses consecutive cameras (no wrap-around).
pub fn evaluate_edit(
    originals: &[ImageBuffer],
    edited: &[ImageBuffer],
    texts: &EditTexts<'_>,
    provider: &dyn EmbeddingProvider,
) -> Result<MetricReport> {
    if originals.len() != edited.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} original views but {} edited views",
            originals.len(),
            edited.len()
        )));
    }
    let embed_all = |imgs: &[ImageBuffer]| -> Result<Vec<Vec<f64>>> {
        let out: Vec<Result<Vec<f64>>> = imgs.par_iter().map(|i| provider.embed_image(i)).collect();
        out.into_iter().collect()
    };
    let x = embed_all(originals)?;
    let x_hat = embed_all(edited)?;
    let t = provider.embed_text(texts.caption)?;
    let t_hat = provider.embed_text(texts.edited_caption)?;
    let prompt = provider.embed_text(texts.generative_prompt)?;

    let mut per_view = PerView::default();
    for i in 0..x.len() {
        per_view
            .clip_sim
            .push(directional_similarity_embedded(&x[i], &x_hat[i], &t, &t_hat)?);
        same_dim(&[&x_hat[i], &prompt])?;
        per_view.clip_text.push(cosine(&x_hat[i], &prompt));
    }
    for i in 1..x.len() {
        per_view
            .clip_cons
            .push(directional_consistency_embedded(&x[i - 1], &x[i], &x_hat[i - 1], &x_hat[i])?);
    }
    Ok(MetricReport {
        provider: provider.name().to_owned(),
        clip_sim: mean_defined(&per_view.clip_sim),
        clip_cons: mean_defined(&per_view.clip_cons),
        clip_text: mean_defined(&per_view.clip_text),
        per_view,
        timings_s: BTreeMap::new(),
    })
}
