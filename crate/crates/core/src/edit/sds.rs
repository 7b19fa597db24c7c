use rand::Rng;
use rand_distr::StandardNormal;

use super::codec::{ImageCodec, LatentImage};
use super::oracle::{EditOracle, OracleQuery};
use super::schedule::{add_noise, alpha_bar, NoiseSchedule};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::render::{backward, render_with, RenderGradients, RenderSettings};
use crate::scene::Scene;

/// What the oracle is conditioned on for one view: the encoded original
/// render and its pixel coverage.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewCondition {
    pub latent: LatentImage,
    pub coverage: Vec<f64>,
}

impl ViewCondition {
    pub fn from_render(codec: &dyn ImageCodec, render: &ImageBuffer) -> Result<Self> {
        let coverage = if render.channels() == 4 {
            render.alpha()
        } else {
            vec![1.0; render.width() * render.height()]
        };
        Ok(Self {
            latent: codec.encode(render)?,
            coverage,
        })
    }
}

/// The fixed parts of a score-distillation step.
pub struct SdsContext<'a> {
    pub oracle: &'a dyn EditOracle,
    pub codec: &'a dyn ImageCodec,
    pub schedule: &'a NoiseSchedule,
    pub prompt: &'a str,
    pub text_scale: f64,
    pub image_scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdsDiagnostics {
    pub t: f64,
    pub alpha_bar: f64,
    pub weight: f64,
    /// `‖Δ‖₁` over the latent.
    pub residual_l1: f64,
    /// Number of latent entries.
    pub latent_size: usize,
}

impl SdsDiagnostics {
    pub fn normalized_residual(&self) -> f64 {
        self.residual_l1 / self.latent_size.max(1) as f64
    }
}

/// Standard-normal latent of the given shape.
pub fn sample_noise(like: &LatentImage, rng: &mut impl Rng) -> LatentImage {
    let data = (0..like.data().len()).map(|_| rng.sample(StandardNormal)).collect();
    ImageBuffer::from_vec(like.width(), like.height(), like.channels(), data).expect("finite normal samples")
}

/// One SDS gradient: render, encode, noise, query the oracle, and push
/// `w(t)·√ᾱ(t)·(ε̂ − ε)` back through the codec and the rasterizer.
/// `condition` comes from the original render of this view.
pub fn sds_step(
    scene: &Scene,
    camera: &Camera,
    condition: &ViewCondition,
    ctx: &SdsContext<'_>,
    step: usize,
    rng: &mut impl Rng,
) -> Result<(RenderGradients, SdsDiagnostics)> {
    if scene.is_empty() {
        return Err(Error::InvalidArgument("cannot edit an empty scene".into()));
    }
    let fwd = render_with(scene, camera, &RenderSettings::default());
    let z = ctx.codec.encode(&fwd.image)?;
    if !z.same_shape(&condition.latent) {
        return Err(Error::ShapeMismatch(format!(
            "latent {} does not match condition {}",
            z.shape_string(),
            condition.latent.shape_string()
        )));
    }
    let t = ctx.schedule.sample_timestep(step, rng);
    let eps = sample_noise(&z, rng);
    let a = alpha_bar(t);
    let z_t = add_noise(&z, t, &eps)?;
    let eps_hat = ctx.oracle.predict_noise(&OracleQuery {
        noisy: &z_t,
        t,
        alpha_bar: a,
        condition: &condition.latent,
        prompt: ctx.prompt,
        text_scale: ctx.text_scale,
        image_scale: ctx.image_scale,
        noise: &eps,
        codec: ctx.codec,
        background: scene.background,
        coverage: Some(&condition.coverage),
    })?;
    if !eps_hat.same_shape(&z) {
        return Err(Error::Oracle(crate::error::OracleError::Malformed(format!(
            "oracle returned {} for a {} latent",
            eps_hat.shape_string(),
            z.shape_string()
        ))));
    }
    let weight = ctx.schedule.weight(t);
    let scale = weight * a.sqrt();
    let mut residual_l1 = 0.0;
    let upstream = eps_hat.zip_map(&eps, |p, e| {
        let d = p - e;
        residual_l1 += d.abs();
        scale * d
    })?;
    let pixel_grad = ctx.codec.backward(&upstream, camera.width, camera.height)?;
    let grads = backward(scene, camera, &fwd, &pixel_grad)?;
    Ok((
        grads,
        SdsDiagnostics {
            t,
            alpha_bar: a,
            weight,
            residual_l1,
            latent_size: z.data().len(),
        },
    ))
}
