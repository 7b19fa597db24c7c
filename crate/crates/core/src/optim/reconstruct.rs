use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{adam_step, densify_and_prune, photometric_loss, DensifyReport, OptimState, ReconConfig};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::render::{backward, render_with, RenderSettings};
use crate::scene::{logit, GaussianSplat, Scene};
use crate::sh;

pub struct ReconOutput {
    pub scene: Scene,
    pub loss_history: Vec<f64>,
    pub densify_events: Vec<DensifyReport>,
}

/// `n` splats uniform in `[-1, 1]³`, opacity 0.1, mid-gray, identity rotation,
/// isotropic scale equal to the mean distance to the three nearest neighbours.
pub fn initial_scene(n: usize, config: &ReconConfig, rng: &mut impl Rng) -> Scene {
    let points: Vec<Vector3<f64>> = (0..n)
        .map(|_| {
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let spacing: Vec<f64> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best = [f64::INFINITY; 3];
            for (j, q) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = (p - q).norm_squared();
                if d < best[2] {
                    best[2] = d;
                    best.sort_by(f64::total_cmp);
                }
            }
            let found: Vec<f64> = best.iter().filter(|d| d.is_finite()).map(|d| d.sqrt()).collect();
            if found.is_empty() {
                0.1
            } else {
                found.iter().sum::<f64>() / found.len() as f64
            }
        })
        .collect();
    let k = sh::coeff_count(config.sh_degree);
    let splats = points
        .iter()
        .zip(&spacing)
        .map(|(p, &s)| GaussianSplat {
            position: [p.x as f32, p.y as f32, p.z as f32],
            rotation: [1.0, 0.0, 0.0, 0.0],
            log_scale: [s.max(1e-4).ln() as f32; 3],
            opacity_logit: logit(0.1) as f32,
            sh: vec![[0.0; 3]; k],
        })
        .collect();
    Scene::with_splats(splats, config.sh_degree, config.background)
}

/// Scene extent used by the clone/split size test: 1.1 × the largest camera
/// distance from the cameras' mean centre.
pub fn camera_extent<'a>(cameras: impl IntoIterator<Item = &'a Camera>) -> f64 {
    let pos: Vec<Vector3<f64>> = cameras.into_iter().map(|c| c.position()).collect();
    if pos.is_empty() {
        return 1.0;
    }
    let center = pos.iter().sum::<Vector3<f64>>() / pos.len() as f64;
    let r = pos.iter().map(|p| (p - center).norm()).fold(0.0, f64::max);
    if r > 0.0 {
        1.1 * r
    } else {
        1.0
    }
}

/// Fits a splat scene to posed target images.
pub fn reconstruct(targets: &[(Camera, ImageBuffer)], config: &ReconConfig, seed: u64) -> Result<ReconOutput> {
    config.validate()?;
    let (first_cam, first) = targets
        .first()
        .ok_or_else(|| Error::InvalidArgument("reconstruction needs at least one target view".into()))?;
    for (cam, img) in targets {
        if img.width() != first.width()
            || img.height() != first.height()
            || cam.width != img.width()
            || cam.height != img.height()
            || img.channels() < 3
        {
            return Err(Error::ShapeMismatch(format!(
                "target {} does not match {} / camera {}x{}",
                img.shape_string(),
                first.shape_string(),
                cam.width,
                cam.height
            )));
        }
        if img.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target image"));
        }
    }
    let size = (first_cam.width, first_cam.height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = initial_scene(config.n_initial, config, &mut rng);
    let mut loss_history = Vec::with_capacity(config.n_steps);
    let mut densify_events = Vec::new();
    if config.n_steps == 0 {
        return Ok(ReconOutput {
            scene,
            loss_history,
            densify_events,
        });
    }
    let extent = camera_extent(targets.iter().map(|(c, _)| c));
    let settings = RenderSettings::default();
    let densify_until = config.densify_until.unwrap_or(config.n_steps);
    let mut state = OptimState::new(&scene);
    let mut lr = config.learning_rates;
    for step in 0..config.n_steps {
        let (cam, target) = &targets[rng.random_range(0..targets.len())];
        let fwd = render_with(&scene, cam, &settings);
        let (loss, pixel_grad) = photometric_loss(&fwd.image, target, config.loss_lambda)?;
        let grads = backward(&scene, cam, &fwd, &pixel_grad)?;
        if step < densify_until {
            state.accumulate(&grads, size);
        }
        let progress = step as f64 / config.n_steps as f64;
        lr.position = config.learning_rates.position * config.position_lr_final_factor.powf(progress);
        adam_step(&mut scene, &grads, &mut state, &lr)?;
        loss_history.push(loss);
        let done = step + 1;
        if done % config.densify_interval == 0 && done < densify_until {
            let mut report = if scene.len() <= config.max_splats {
                densify_and_prune(&mut scene, &mut state, config, extent, &mut rng)
            } else {
                let cap = ReconConfig {
                    densify_grad_threshold: f64::INFINITY,
                    ..config.clone()
                };
                densify_and_prune(&mut scene, &mut state, &cap, extent, &mut rng)
            };
            report.step = done;
            log::debug!(
                "step {done}: loss {loss:.5}, {} -> {} splats (+{} clone, +{} split, -{} prune)",
                report.before,
                report.after,
                report.cloned,
                report.split,
                report.pruned
            );
            densify_events.push(report);
        }
    }
    Ok(ReconOutput {
        scene,
        loss_history,
        densify_events,
    })
}
