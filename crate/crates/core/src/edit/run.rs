use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::codec::ImageCodec;
use super::oracle::EditOracle;
use super::schedule::{NoiseSchedule, Weighting};
use super::sds::{sds_step, SdsContext, ViewCondition};
use crate::camera::CameraRig;
use crate::error::{Error, Result};
use crate::optim::{adam_step, LearningRates, OptimState};
use crate::render::render;
use crate::scene::Scene;

/// Settings of the edit loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EditConfig {
    pub n_edit_steps: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// Text guidance scale `s_T`, forwarded to the oracle.
    pub text_scale: f64,
    /// Image guidance scale `s_I`, forwarded to the oracle.
    pub image_scale: f64,
    pub weighting: Weighting,
    pub learning_rates: LearningRates,
    pub convergence_window: usize,
    pub convergence_threshold: f64,
    /// Stop as soon as the residual history passes [`convergence_check`].
    pub early_stop: bool,
    /// Consecutive failed oracle calls tolerated before the edit aborts.
    pub max_retries: usize,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self {
            n_edit_steps: 500,
            t_min: 0.02,
            t_max: 0.98,
            text_scale: 100.0,
            image_scale: 10.0,
            weighting: Weighting::default(),
            learning_rates: LearningRates {
                position: 1.6e-5,
                color: 1.25e-2,
                ..LearningRates::default()
            },
            convergence_window: 50,
            convergence_threshold: 0.01,
            early_stop: true,
            max_retries: 3,
        }
    }
}

impl EditConfig {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.t_min, self.t_max, self.n_edit_steps, self.weighting)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        if self.convergence_window == 0 {
            return Err(Error::InvalidArgument("convergence_window must be positive".into()));
        }
        Ok(())
    }
}

/// True when the mean of the last `window` normalised residuals is below `threshold`.
pub fn convergence_check(history: &[f64], window: usize, threshold: f64) -> bool {
    if window == 0 || history.len() < window {
        return false;
    }
    let tail = &history[history.len() - window..];
    tail.iter().sum::<f64>() / (window as f64) < threshold
}

pub struct EditOutput {
    pub scene: Scene,
    /// Per successful step, `‖Δ‖₁ / latent size`.
    pub residuals: Vec<f64>,
    pub timesteps: Vec<f64>,
    pub steps_run: usize,
    pub converged_at: Option<usize>,
    pub skipped_steps: usize,
}

/// Iteratively edits `scene` so that its renders follow the oracle's edits.
pub fn edit(
    scene: &Scene,
    rig: &CameraRig,
    oracle: &dyn EditOracle,
    codec: &dyn ImageCodec,
    prompt: &str,
    config: &EditConfig,
    seed: u64,
) -> Result<EditOutput> {
    config.validate()?;
    let mut scene = scene.clone();
    let mut out = EditOutput {
        scene: Scene::new(0, [0.0; 3]),
        residuals: Vec::new(),
        timesteps: Vec::new(),
        steps_run: 0,
        converged_at: None,
        skipped_steps: 0,
    };
    if config.n_edit_steps == 0 || rig.is_empty() {
        out.scene = scene;
        return Ok(out);
    }
    scene.validate()?;
    let cameras: Vec<_> = rig.iter().cloned().collect();
    let conditions: Vec<ViewCondition> = cameras
        .iter()
        .map(|c| ViewCondition::from_render(codec, &render(&scene, c)))
        .collect::<Result<_>>()?;
    let schedule = config.schedule()?;
    let ctx = SdsContext {
        oracle,
        codec,
        schedule: &schedule,
        prompt,
        text_scale: config.text_scale,
        image_scale: config.image_scale,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = OptimState::new(&scene);
    let mut failures = 0;
    for step in 0..config.n_edit_steps {
        out.steps_run = step + 1;
        let view = rng.random_range(0..cameras.len());
        match sds_step(&scene, &cameras[view], &conditions[view], &ctx, step, &mut rng) {
            Ok((grads, diag)) => {
                failures = 0;
                adam_step(&mut scene, &grads, &mut state, &config.learning_rates)?;
                out.residuals.push(diag.normalized_residual());
                out.timesteps.push(diag.t);
            }
            Err(Error::Oracle(e)) => {
                failures += 1;
                out.skipped_steps += 1;
                log::warn!("edit step {step}: oracle call failed ({e}); skipping");
                if failures > config.max_retries {
                    return Err(Error::Oracle(e));
                }
                continue;
            }
            Err(e) => return Err(e),
        }
        if config.early_stop
            && convergence_check(&out.residuals, config.convergence_window, config.convergence_threshold)
        {
            out.converged_at = Some(step + 1);
            break;
        }
    }
    out.scene = scene;
    Ok(out)
}
