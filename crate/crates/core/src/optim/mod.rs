//! Reconstruction: photometric losses, Adam, densification and the training loop.

mod adam;
mod densify;
mod loss;
mod reconstruct;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, LearningRates, OptimState, BETA1, BETA2, EPSILON};
pub use densify::{densify_and_prune, DensifyReport};
pub use loss::{photometric_loss, ssim, ssim_with_grad};
pub use reconstruct::{camera_extent, initial_scene, reconstruct, ReconOutput};

/// Settings of the reconstruction loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    pub n_initial: usize,
    pub n_steps: usize,
    pub densify_interval: usize,
    /// No densification after this step; `None` densifies throughout.
    pub densify_until: Option<usize>,
    /// Densification is skipped while the scene holds more splats than this.
    pub max_splats: usize,
    /// ε_α: splats below this opacity are pruned.
    pub prune_opacity: f64,
    /// φ: split children have their scale divided by this.
    pub split_scale_factor: f64,
    /// Mean NDC-space positional-gradient norm that triggers densification.
    pub densify_grad_threshold: f64,
    /// Splats larger than this fraction of the scene extent split instead of cloning.
    pub percent_dense: f64,
    /// λ in `(1 − λ)·L1 + λ·D-SSIM`.
    pub loss_lambda: f64,
    /// Position learning rate decays exponentially to this fraction over the run.
    pub position_lr_final_factor: f64,
    pub sh_degree: usize,
    pub learning_rates: LearningRates,
    pub background: [f64; 3],
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            n_initial: 10_000,
            n_steps: 3000,
            densify_interval: 50,
            densify_until: None,
            max_splats: 100_000,
            prune_opacity: 0.005,
            split_scale_factor: 1.6,
            densify_grad_threshold: 2e-4,
            percent_dense: 0.01,
            loss_lambda: 0.2,
            position_lr_final_factor: 0.1,
            sh_degree: 0,
            learning_rates: LearningRates::default(),
            background: [1.0, 1.0, 1.0],
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: String| Err(crate::Error::InvalidArgument(m));
        if self.n_initial == 0 {
            return bad("n_initial must be positive".into());
        }
        if self.densify_interval == 0 || (self.n_steps > 0 && self.densify_interval > self.n_steps) {
            return bad(format!(
                "densify_interval {} must be in 1..={}",
                self.densify_interval, self.n_steps
            ));
        }
        for (name, v) in [
            ("prune_opacity", self.prune_opacity),
            ("split_scale_factor", self.split_scale_factor),
            ("densify_grad_threshold", self.densify_grad_threshold),
            ("percent_dense", self.percent_dense),
            ("position_lr_final_factor", self.position_lr_final_factor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.loss_lambda) {
            return bad(format!("loss_lambda {} outside [0, 1]", self.loss_lambda));
        }
        if self.sh_degree > crate::sh::MAX_SH_DEGREE {
            return bad(format!("sh_degree {} exceeds {}", self.sh_degree, crate::sh::MAX_SH_DEGREE));
        }
        Ok(())
    }
}
