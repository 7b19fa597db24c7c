//! Tile-based differentiable Gaussian rasterizer.
//!
//! The forward pass projects every splat with the EWA approximation, bins the
//! projected footprints into 16×16 pixel tiles, depth-sorts each tile list and
//! composites front to back. The backward pass walks the same lists back to
//! front and returns analytic gradients for every splat parameter.
//!
//! Tiles are processed in parallel; per-splat gradient partials are reduced in
//! tile order so results do not depend on the thread count.

mod grads;
mod project;
mod raster;
mod tiles;

use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::scene::Scene;

pub use grads::RenderGradients;
pub use project::{project_splat, ProjectedSplat};
pub use tiles::{TileBinning, TILE_SIZE};

/// Numerical conventions of the rasterizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    /// Splats at camera depth `<= near` are culled.
    pub near: f64,
    /// Per-pixel contributions `α'` below this are skipped.
    pub min_contribution: f64,
    /// Upper clamp on per-pixel `α'`.
    pub max_alpha: f64,
    /// Compositing stops once transmittance would drop below this.
    pub transmittance_cutoff: f64,
    /// Isotropic dilation added to every 2D covariance, in px².
    pub low_pass: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            near: 0.01,
            min_contribution: 1.0 / 255.0,
            max_alpha: 0.99,
            transmittance_cutoff: 1e-4,
            low_pass: 0.3,
        }
    }
}

impl RenderSettings {
    /// Settings without the contribution and transmittance cutoffs, so the
    /// forward map is smooth wherever `α'` stays below the clamp. Used for
    /// finite-difference gradient checks.
    pub fn smooth() -> Self {
        Self {
            min_contribution: 0.0,
            transmittance_cutoff: 0.0,
            ..Self::default()
        }
    }
}

/// Forward render plus everything the backward pass needs.
pub struct RenderOutput {
    /// RGBA image; alpha is `1 - final transmittance`.
    pub image: ImageBuffer,
    /// Alpha-normalised expected depth per pixel (0 where nothing was hit).
    pub depth: Vec<f64>,
    pub(crate) state: ForwardState,
}

pub(crate) struct ForwardState {
    pub projected: Vec<Option<ProjectedSplat>>,
    pub binning: TileBinning,
    pub final_t: Vec<f64>,
    pub n_contrib: Vec<u32>,
    pub settings: RenderSettings,
}

impl RenderOutput {
    pub fn projected(&self) -> &[Option<ProjectedSplat>] {
        &self.state.projected
    }

    pub fn binning(&self) -> &TileBinning {
        &self.state.binning
    }
}

/// Renders `scene` from `camera` with default settings, returning RGBA.
pub fn render(scene: &Scene, camera: &Camera) -> ImageBuffer {
    render_with(scene, camera, &RenderSettings::default()).image
}

pub fn render_with(scene: &Scene, camera: &Camera, settings: &RenderSettings) -> RenderOutput {
    let projected: Vec<Option<ProjectedSplat>> = scene
        .splats
        .par_iter()
        .map(|s| project_splat(s, camera, settings))
        .collect();
    let binning = TileBinning::build(&projected, camera.width, camera.height);
    raster::forward(&projected, binning, scene.background, camera, *settings)
}

/// Gradients of `sum(upstream ⊙ render)` with respect to every splat parameter.
///
/// `upstream` must match the render size with 3 (RGB) or 4 (RGBA) channels.
pub fn render_backward(scene: &Scene, camera: &Camera, upstream: &ImageBuffer) -> Result<RenderGradients> {
    render_backward_with(scene, camera, upstream, &RenderSettings::default())
}

pub fn render_backward_with(
    scene: &Scene,
    camera: &Camera,
    upstream: &ImageBuffer,
    settings: &RenderSettings,
) -> Result<RenderGradients> {
    let out = render_with(scene, camera, settings);
    backward(scene, camera, &out, upstream)
}

/// Backward pass reusing a forward result from [`render_with`].
pub fn backward(
    scene: &Scene,
    camera: &Camera,
    forward: &RenderOutput,
    upstream: &ImageBuffer,
) -> Result<RenderGradients> {
    if upstream.width() != camera.width
        || upstream.height() != camera.height
        || !(upstream.channels() == 3 || upstream.channels() == 4)
    {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient {} for a {}x{} render",
            upstream.shape_string(),
            camera.width,
            camera.height
        )));
    }
    if upstream.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("upstream gradient"));
    }
    Ok(raster::backward(scene, camera, &forward.state, upstream))
}
