use rayon::prelude::*;

use super::project::{projection_backward, FootprintGrad};
use super::{ForwardState, ProjectedSplat, RenderGradients, RenderOutput, RenderSettings, TileBinning};
use crate::camera::Camera;
use crate::image::ImageBuffer;
use crate::scene::Scene;

struct TileResult {
    rgba: Vec<[f64; 4]>,
    depth: Vec<f64>,
    final_t: Vec<f64>,
    n_contrib: Vec<u32>,
}

#[inline]
fn footprint(p: &ProjectedSplat, px: f64, py: f64) -> (f64, f64, f64) {
    let dx = px - p.mean[0];
    let dy = py - p.mean[1];
    let [a, b, c] = p.conic;
    (-0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy), dx, dy)
}

pub(super) fn forward(
    projected: &[Option<ProjectedSplat>],
    binning: TileBinning,
    background: [f64; 3],
    camera: &Camera,
    settings: RenderSettings,
) -> RenderOutput {
    let (w, h) = (camera.width, camera.height);
    let tiles: Vec<TileResult> = (0..binning.tile_count())
        .into_par_iter()
        .map(|t| {
            let (x0, x1, y0, y1) = binning.tile_bounds(t, w, h);
            let n = (x1 - x0) * (y1 - y0);
            let mut r = TileResult {
                rgba: Vec::with_capacity(n),
                depth: Vec::with_capacity(n),
                final_t: Vec::with_capacity(n),
                n_contrib: Vec::with_capacity(n),
            };
            let list = &binning.lists[t];
            for y in y0..y1 {
                for x in x0..x1 {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let mut t_acc = 1.0;
                    let mut color = [0.0; 3];
                    let mut depth = 0.0;
                    let mut last = 0u32;
                    for (pos, &idx) in list.iter().enumerate() {
                        let p = projected[idx as usize].as_ref().expect("binned splat is projected");
                        let (power, _, _) = footprint(p, px, py);
                        if power > 0.0 {
                            continue;
                        }
                        let alpha = (p.opacity * power.exp()).min(settings.max_alpha);
                        if alpha < settings.min_contribution || alpha <= 0.0 {
                            continue;
                        }
                        let next_t = t_acc * (1.0 - alpha);
                        if next_t < settings.transmittance_cutoff {
                            break;
                        }
                        let wgt = alpha * t_acc;
                        for ch in 0..3 {
                            color[ch] += p.color[ch] * wgt;
                        }
                        depth += p.depth * wgt;
                        t_acc = next_t;
                        last = pos as u32 + 1;
                    }
                    let cover = 1.0 - t_acc;
                    r.rgba.push([
                        color[0] + t_acc * background[0],
                        color[1] + t_acc * background[1],
                        color[2] + t_acc * background[2],
                        cover,
                    ]);
                    r.depth.push(if cover > 1e-8 { depth / cover } else { 0.0 });
                    r.final_t.push(t_acc);
                    r.n_contrib.push(last);
                }
            }
            r
        })
        .collect();

    let mut image = ImageBuffer::new(w, h, 4);
    let mut depth = vec![0.0; w * h];
    let mut final_t = vec![1.0; w * h];
    let mut n_contrib = vec![0u32; w * h];
    for (t, r) in tiles.iter().enumerate() {
        let (x0, x1, y0, y1) = binning.tile_bounds(t, w, h);
        let mut k = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                image.pixel_mut(x, y).copy_from_slice(&r.rgba[k]);
                depth[y * w + x] = r.depth[k];
                final_t[y * w + x] = r.final_t[k];
                n_contrib[y * w + x] = r.n_contrib[k];
                k += 1;
            }
        }
    }
    RenderOutput {
        image,
        depth,
        state: ForwardState {
            projected: projected.to_vec(),
            binning,
            final_t,
            n_contrib,
            settings,
        },
    }
}

pub(super) fn backward(scene: &Scene, camera: &Camera, state: &ForwardState, upstream: &ImageBuffer) -> RenderGradients {
    let (w, h) = (camera.width, camera.height);
    let bg = scene.background;
    let settings = state.settings;
    let binning = &state.binning;
    let channels = upstream.channels();

    let partials: Vec<Vec<FootprintGrad>> = (0..binning.tile_count())
        .into_par_iter()
        .map(|t| {
            let list = &binning.lists[t];
            let mut acc = vec![FootprintGrad::default(); list.len()];
            let (x0, x1, y0, y1) = binning.tile_bounds(t, w, h);
            for y in y0..y1 {
                for x in x0..x1 {
                    let up = upstream.pixel(x, y);
                    let g_alpha_out = if channels == 4 { up[3] } else { 0.0 };
                    if up[..3].iter().all(|&v| v == 0.0) && g_alpha_out == 0.0 {
                        continue;
                    }
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let t_final = state.final_t[y * w + x];
                    let n = state.n_contrib[y * w + x] as usize;
                    let mut t_acc = t_final;
                    let mut behind = [t_final * bg[0], t_final * bg[1], t_final * bg[2]];
                    for pos in (0..n).rev() {
                        let p = state.projected[list[pos] as usize].as_ref().expect("binned splat is projected");
                        let (power, dx, dy) = footprint(p, px, py);
                        if power > 0.0 {
                            continue;
                        }
                        let g = power.exp();
                        let raw = p.opacity * g;
                        let alpha = raw.min(settings.max_alpha);
                        if alpha < settings.min_contribution || alpha <= 0.0 {
                            continue;
                        }
                        let one_minus = 1.0 - alpha;
                        let t_i = t_acc / one_minus;
                        let wgt = alpha * t_i;
                        let mut d_alpha = g_alpha_out * t_final / one_minus;
                        let a = &mut acc[pos];
                        for ch in 0..3 {
                            a.color[ch] += up[ch] * wgt;
                            d_alpha += up[ch] * (p.color[ch] * t_i - behind[ch] / one_minus);
                            behind[ch] += p.color[ch] * wgt;
                        }
                        t_acc = t_i;
                        if raw >= settings.max_alpha {
                            continue;
                        }
                        a.opacity += d_alpha * g;
                        let d_power = d_alpha * p.opacity * g;
                        let [ca, cb, cc] = p.conic;
                        a.mean[0] += d_power * (ca * dx + cb * dy);
                        a.mean[1] += d_power * (cb * dx + cc * dy);
                        a.conic[0] += d_power * -0.5 * dx * dx;
                        a.conic[1] += d_power * -dx * dy;
                        a.conic[2] += d_power * -0.5 * dy * dy;
                    }
                }
            }
            acc
        })
        .collect();

    let mut per_splat = vec![FootprintGrad::default(); scene.len()];
    for (t, tile) in partials.iter().enumerate() {
        for (pos, g) in tile.iter().enumerate() {
            per_splat[binning.lists[t][pos] as usize].add(g);
        }
    }

    let mut grads = RenderGradients::zeros(scene.len(), scene.sh_coeffs());
    let stride = grads.stride();
    grads
        .params_mut()
        .par_chunks_mut(stride)
        .zip(per_splat.par_iter())
        .zip(scene.splats.par_iter().zip(state.projected.par_iter()))
        .for_each(|((out, g), (splat, proj))| {
            if proj.is_some() {
                projection_backward(splat, camera, &settings, g, out);
            }
        });
    for (i, (g, proj)) in per_splat.iter().zip(&state.projected).enumerate() {
        grads.visible[i] = proj.is_some();
        grads.mean2d[i] = g.mean;
    }
    grads
}
