use std::collections::VecDeque;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::edit::{add_noise, alpha_bar, sample_noise, EditOracle, IdentityCodec, OracleQuery};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::render::{render_with, RenderSettings};
use crate::scene::Scene;

use super::raster::{rasterize, Shading};
use super::TexturedMesh;

/// Back-projection settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackprojectSettings {
    /// A texel is occluded when it lies further than this behind the depth proxy.
    pub depth_tolerance: f64,
    /// Pixels with less coverage carry no reliable colour or depth.
    pub min_alpha: f64,
}

impl Default for BackprojectSettings {
    fn default() -> Self {
        Self {
            depth_tolerance: 0.1,
            min_alpha: 0.5,
        }
    }
}

/// Surface point and normal under every texel center (row-major), if any.
fn texel_surface(tm: &TexturedMesh) -> Vec<Option<(Vector3<f64>, Vector3<f64>)>> {
    let (w, h) = (tm.texture.width(), tm.texture.height());
    let mut out = vec![None; w * h];
    for t in 0..tm.mesh.triangles.len() {
        let uv = tm.triangle_uvs(t).map(|[u, v]| [u * w as f64, v * h as f64]);
        let area = (uv[1][0] - uv[0][0]) * (uv[2][1] - uv[0][1]) - (uv[2][0] - uv[0][0]) * (uv[1][1] - uv[0][1]);
        if area.abs() < 1e-15 {
            continue;
        }
        let [a, b, c] = tm.mesh.triangles[t].map(|v| tm.mesh.vertex(v));
        let normal = tm.mesh.face_normal(t);
        let x0 = uv.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let x1 = (uv.iter().map(|p| p[0]).fold(0.0, f64::max).ceil() as usize).min(w);
        let y0 = uv.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let y1 = (uv.iter().map(|p| p[1]).fold(0.0, f64::max).ceil() as usize).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                let edge = |i: usize, j: usize| {
                    (uv[j][0] - uv[i][0]) * (cy - uv[i][1]) - (cx - uv[i][0]) * (uv[j][1] - uv[i][1])
                };
                let bary = [edge(1, 2) / area, edge(2, 0) / area, edge(0, 1) / area];
                if bary.iter().all(|&v| v >= 0.0) && out[y * w + x].is_none() {
                    out[y * w + x] = Some((a * bary[0] + b * bary[1] + c * bary[2], normal));
                }
            }
        }
    }
    out
}

/// Fills every texel without a colour from its nearest coloured texel (4-connected BFS).
fn dilate(texture: &mut ImageBuffer, known: &mut [bool]) {
    let (w, h) = (texture.width(), texture.height());
    let mut queue: VecDeque<usize> = (0..w * h).filter(|&i| known[i]).collect();
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let src = [texture.data()[3 * i], texture.data()[3 * i + 1], texture.data()[3 * i + 2]];
        let mut visit = |nx: usize, ny: usize| {
            let j = ny * w + nx;
            if !known[j] {
                known[j] = true;
                texture.pixel_mut(nx, ny).copy_from_slice(&src);
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }
}

/// Bakes scene renders into the mesh texture.
///
/// Each texel's surface point collects the colour of every view where it is
/// front-facing, covered and not more than `depth_tolerance` behind the
/// scene's alpha-normalised depth, weighted by the cosine between normal and
/// view ray. Render colours are un-composited from the background first.
/// Texels no view sees take the colour of the nearest seen texel.
pub fn backproject_colors(
    tm: &TexturedMesh,
    scene: &Scene,
    cameras: &[Camera],
    settings: &BackprojectSettings,
) -> Result<ImageBuffer> {
    let (w, h) = (tm.texture.width(), tm.texture.height());
    let surface = texel_surface(tm);
    let mut sum = vec![[0.0f64; 4]; w * h];
    let render_settings = RenderSettings::default();
    let bg = scene.background;
    for cam in cameras {
        let out = render_with(scene, cam, &render_settings);
        let (img, depth) = (&out.image, &out.depth);
        let eye = cam.position();
        sum.par_iter_mut().zip(&surface).for_each(|(acc, s)| {
            let Some((p, n)) = s else { return };
            let to_eye = eye - p;
            let cos = n.dot(&to_eye) / to_eye.norm();
            if cos <= 0.0 {
                return;
            }
            let Some((x, y, z)) = cam.project(p, render_settings.near) else {
                return;
            };
            if x < 0.0 || y < 0.0 || x >= cam.width as f64 || y >= cam.height as f64 {
                return;
            }
            let (px, py) = (x as usize, y as usize);
            let i = py * cam.width + px;
            let alpha = img.pixel(px, py)[3];
            if alpha < settings.min_alpha || z > depth[i] + settings.depth_tolerance {
                return;
            }
            let mut c = [0.0; 4];
            img.sample_bilinear(x, y, &mut c);
            let a = c[3].max(settings.min_alpha);
            for k in 0..3 {
                let fg = ((c[k] - (1.0 - a) * bg[k]) / a).clamp(0.0, 1.0);
                acc[k] += cos * fg;
            }
            acc[3] += cos;
        });
    }
    let mut texture = ImageBuffer::filled(w, h, 3, 0.0);
    let mut known = vec![false; w * h];
    for (i, acc) in sum.iter().enumerate() {
        if acc[3] > 0.0 {
            known[i] = true;
            let p = texture.pixel_mut(i % w, i / w);
            for k in 0..3 {
                p[k] = acc[k] / acc[3];
            }
        }
    }
    if known.iter().any(|&k| k) {
        dilate(&mut texture, &mut known);
    } else {
        log::warn!("no texel is visible from any camera; texture left as background");
        for p in texture.data_mut().chunks_mut(3) {
            p.copy_from_slice(&bg);
        }
    }
    Ok(texture)
}

/// Texture refinement settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub n_steps: usize,
    /// Diffusion time of the noise added to the coarse render.
    pub t_start: f64,
    /// Denoising steps from `t_start` down to 0.
    pub denoise_steps: usize,
    pub learning_rate: f64,
    pub text_scale: f64,
    pub image_scale: f64,
    pub max_retries: usize,
    pub background: [f64; 3],
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            n_steps: 50,
            t_start: 0.5,
            denoise_steps: 4,
            learning_rate: 0.5,
            text_scale: 100.0,
            image_scale: 10.0,
            max_retries: 3,
            background: [1.0; 3],
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_start > 0.0 && self.t_start < 1.0) {
            return Err(Error::InvalidArgument(format!("t_start must be in (0, 1), got {}", self.t_start)));
        }
        if self.denoise_steps == 0 {
            return Err(Error::InvalidArgument("denoise_steps must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Result of [`refine_texture`].
#[derive(Clone, Debug)]
pub struct RefineOutput {
    pub mesh: TexturedMesh,
    /// Per-step MSE between refined and coarse renders over covered pixels.
    pub losses: Vec<f64>,
    pub skipped_steps: usize,
}

/// Denoises `coarse` under the oracle, returning the refined image.
///
/// Each denoising step re-noises the current estimate `x` at time `t` with the
/// step's noise `ε`, asks the oracle for `ε̂` and moves
/// `x ← x − √(1−ᾱ)/√ᾱ · (ε̂ − ε)`, the change of the one-step `x₀` estimate
/// relative to a perfect predictor. A predictor that returns `ε` leaves
/// `x` bit-for-bit unchanged.
#[allow(clippy::too_many_arguments)]
fn denoise(
    coarse: &ImageBuffer,
    coverage: &[f64],
    oracle: &dyn EditOracle,
    prompt: &str,
    cfg: &RefineConfig,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<ImageBuffer, Error> {
    let mut x = coarse.clone();
    for k in 0..cfg.denoise_steps {
        let t = cfg.t_start * (1.0 - k as f64 / cfg.denoise_steps as f64);
        let ab = alpha_bar(t);
        let eps = sample_noise(&x, rng);
        let noisy = add_noise(&x, t, &eps)?;
        let eps_hat = oracle.predict_noise(&OracleQuery {
            noisy: &noisy,
            t,
            alpha_bar: ab,
            condition: coarse,
            prompt,
            text_scale: cfg.text_scale,
            image_scale: cfg.image_scale,
            noise: &eps,
            codec: &IdentityCodec,
            background: cfg.background,
            coverage: Some(coverage),
        })?;
        if !eps_hat.same_shape(&eps) {
            return Err(Error::ShapeMismatch(format!(
                "oracle returned {} for {}",
                eps_hat.shape_string(),
                eps.shape_string()
            )));
        }
        let k = ((1.0 - ab) / ab).sqrt();
        for ((xv, &e_hat), &e) in x.data_mut().iter_mut().zip(eps_hat.data()).zip(eps.data()) {
            *xv -= k * (e_hat - e);
        }
    }
    Ok(x)
}

/// Refines the texture so rasterized views follow the oracle's denoised versions.
///
/// Per step a camera is drawn, the textured mesh rasterized (`I_coarse`),
/// denoised into `I_fine`, and every texel seen in the view moves along the
/// mean pixel gradient of `‖I_fine − I_coarse‖²` over the pixels sampling it.
pub fn refine_texture(
    tm: &TexturedMesh,
    cameras: &[Camera],
    oracle: &dyn EditOracle,
    prompt: &str,
    cfg: &RefineConfig,
    seed: u64,
) -> Result<RefineOutput> {
    cfg.validate()?;
    let mut mesh = tm.clone();
    let mut out = RefineOutput {
        mesh: tm.clone(),
        losses: Vec::new(),
        skipped_steps: 0,
    };
    if cfg.n_steps == 0 || cameras.is_empty() {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tw = mesh.texture.width();
    let mut failures = 0;
    for step in 0..cfg.n_steps {
        let cam = &cameras[rng.random_range(0..cameras.len())];
        let view = rasterize(
            &mesh.mesh,
            Shading::Texture {
                uvs: &mesh.uvs,
                texture: &mesh.texture,
            },
            cam,
            cfg.background,
        );
        let coarse = view.image.rgb();
        let coverage = view.image.alpha();
        let fine = match denoise(&coarse, &coverage, oracle, prompt, cfg, &mut rng) {
            Ok(f) => {
                failures = 0;
                f
            }
            Err(Error::Oracle(e)) => {
                failures += 1;
                out.skipped_steps += 1;
                log::warn!("refine step {step}: oracle call failed ({e}); skipping");
                if failures > cfg.max_retries {
                    return Err(Error::Oracle(e));
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut grad = vec![[0.0f64; 4]; mesh.texture.width() * mesh.texture.height()];
        let mut loss = 0.0;
        let mut covered = 0usize;
        for (i, texel) in view.texel.iter().enumerate() {
            let Some(texel) = texel else { continue };
            covered += 1;
            let g = &mut grad[*texel as usize];
            for k in 0..3 {
                let d = coarse.data()[3 * i + k] - fine.data()[3 * i + k];
                loss += d * d;
                g[k] += 2.0 * d;
            }
            g[3] += 1.0;
        }
        out.losses.push(if covered > 0 { loss / (3 * covered) as f64 } else { 0.0 });
        for (i, g) in grad.iter().enumerate() {
            if g[3] == 0.0 {
                continue;
            }
            let p = mesh.texture.pixel_mut(i % tw, i / tw);
            for k in 0..3 {
                p[k] = (p[k] - cfg.learning_rate * g[k] / g[3]).clamp(0.0, 1.0);
            }
        }
    }
    out.mesh = mesh;
    Ok(out)
}
