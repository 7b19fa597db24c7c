//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use gsedit_core::scene::{covariance_from_rotation_scale, logit, sigmoid, GaussianSplat, Scene};
use gsedit_core::sh;
use gsedit_core::{Camera, ImageBuffer};
use rand::Rng;

/// Random splat cloud inside `[-extent, extent]³` whose colours and opacities
/// stay away from every clamp, so the render is smooth in all parameters.
pub fn random_scene(rng: &mut impl Rng, n: usize, sh_degree: usize, extent: f64) -> Scene {
    let k = sh::coeff_count(sh_degree);
    let splats = (0..n)
        .map(|_| {
            let mut q = [0.0f32; 4];
            for v in &mut q {
                *v = rng.random_range(-1.0..1.0);
            }
            let mut sh = vec![[0.0f32; 3]; k];
            let rgb: [f64; 3] = [
                rng.random_range(0.2..0.8),
                rng.random_range(0.2..0.8),
                rng.random_range(0.2..0.8),
            ];
            sh[0] = sh::rgb_to_dc(rgb);
            for c in sh.iter_mut().skip(1) {
                for ch in c.iter_mut() {
                    *ch = rng.random_range(-0.15..0.15);
                }
            }
            let mut s = GaussianSplat {
                position: [0; 3].map(|_| rng.random_range(-extent..extent) as f32),
                rotation: q,
                log_scale: [0; 3].map(|_| rng.random_range(0.05f64..0.25).ln() as f32),
                opacity_logit: logit(rng.random_range(0.1..0.9)) as f32,
                sh,
            };
            s.normalize_rotation();
            s
        })
        .collect();
    Scene::with_splats(splats, sh_degree, [rng.random(), rng.random(), rng.random()])
}

struct Footprint {
    depth: f64,
    mean: [f64; 2],
    inv: [[f64; 2]; 2],
    opacity: f64,
    color: [f64; 3],
}

fn footprint(s: &GaussianSplat, cam: &Camera, near: f64, low_pass: f64) -> Option<Footprint> {
    let mu = [s.position[0] as f64, s.position[1] as f64, s.position[2] as f64];
    let r = cam.rotation();
    let t = cam.translation();
    let mut p = [0.0; 3];
    for i in 0..3 {
        p[i] = t[i] + (0..3).map(|j| r[(i, j)] * mu[j]).sum::<f64>();
    }
    if p[2] <= near {
        return None;
    }
    let f = cam.focal();
    let j = [[f / p[2], 0.0, -f * p[0] / (p[2] * p[2])], [0.0, f / p[2], -f * p[1] / (p[2] * p[2])]];
    let mut jw = [[0.0; 3]; 2];
    for a in 0..2 {
        for b in 0..3 {
            jw[a][b] = (0..3).map(|k| j[a][k] * r[(k, b)]).sum();
        }
    }
    let sigma = covariance_from_rotation_scale(s.rotation_f64(), s.scale()).ok()?;
    let mut cov = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = 0.0;
            for k in 0..3 {
                for l in 0..3 {
                    acc += jw[a][k] * sigma[(k, l)] * jw[b][l];
                }
            }
            cov[a][b] = acc + if a == b { low_pass } else { 0.0 };
        }
    }
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let inv = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
    let cam_pos = cam.position();
    let d = [mu[0] - cam_pos[0], mu[1] - cam_pos[1], mu[2] - cam_pos[2]];
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let color = sh::sh_to_rgb(&s.sh, sh::degree_for_count(s.sh.len())?, [d[0] / n, d[1] / n, d[2] / n]).ok()?;
    let (cx, cy) = cam.principal_point();
    Some(Footprint {
        depth: p[2],
        mean: [f * p[0] / p[2] + cx, f * p[1] / p[2] + cy],
        inv,
        opacity: sigmoid(s.opacity_logit as f64),
        color,
    })
}

/// Per-pixel reference renderer: every (pixel, splat) pair, one global depth
/// order, no tiling and no footprint bounds.
pub fn brute_force_render(scene: &Scene, cam: &Camera, min_contribution: f64, t_cutoff: f64) -> ImageBuffer {
    let mut fps: Vec<(usize, Footprint)> = scene
        .splats
        .iter()
        .enumerate()
        .filter_map(|(i, s)| footprint(s, cam, 0.01, 0.3).map(|f| (i, f)))
        .collect();
    fps.sort_by(|a, b| a.1.depth.partial_cmp(&b.1.depth).unwrap().then(a.0.cmp(&b.0)));
    let mut img = ImageBuffer::new(cam.width, cam.height, 4);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0;
            let mut c = [0.0; 3];
            for (_, f) in &fps {
                let dx = px - f.mean[0];
                let dy = py - f.mean[1];
                let q = dx * (f.inv[0][0] * dx + f.inv[0][1] * dy) + dy * (f.inv[1][0] * dx + f.inv[1][1] * dy);
                let a = (f.opacity * (-0.5 * q).exp()).min(0.99);
                if a < min_contribution || a <= 0.0 {
                    continue;
                }
                if t * (1.0 - a) < t_cutoff {
                    break;
                }
                for ch in 0..3 {
                    c[ch] += f.color[ch] * a * t;
                }
                t *= 1.0 - a;
            }
            let px = img.pixel_mut(x, y);
            for ch in 0..3 {
                px[ch] = c[ch] + t * scene.background[ch];
            }
            px[3] = 1.0 - t;
        }
    }
    img
}

/// `Σ upstream ⊙ image` over the upstream's channels.
pub fn weighted_sum(image: &ImageBuffer, upstream: &ImageBuffer) -> f64 {
    let c = upstream.channels();
    let mut acc = 0.0;
    for y in 0..image.height() {
        for x in 0..image.width() {
            let a = image.pixel(x, y);
            let b = upstream.pixel(x, y);
            for ch in 0..c {
                acc += a[ch] * b[ch];
            }
        }
    }
    acc
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize, c: usize) -> ImageBuffer {
    let data = (0..w * h * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    ImageBuffer::from_vec(w, h, c, data).unwrap()
}

/// `scene ± h·dir`, as realised in `f32` storage.
pub fn perturbed(scene: &Scene, dir: &[f64], h: f64) -> (Scene, Scene) {
    let stride = scene.splats[0].param_count();
    let mut plus = scene.clone();
    let mut minus = scene.clone();
    for (i, (p, m)) in plus.splats.iter_mut().zip(minus.splats.iter_mut()).enumerate() {
        for k in 0..stride {
            let d = dir[i * stride + k];
            if d == 0.0 {
                continue;
            }
            let base = *p.param_mut(k) as f64;
            *p.param_mut(k) = (base + h * d) as f32;
            *m.param_mut(k) = (base - h * d) as f32;
        }
    }
    (plus, minus)
}

/// Central-difference directional derivative of `loss` along `dir`, using the
/// perturbations actually realised in `f32` storage. Returns
/// `(analytic, numeric)` where analytic is `Σ gᵢ (θ⁺ᵢ − θ⁻ᵢ)`.
pub fn directional_check(
    scene: &Scene,
    grads: &[f64],
    dir: &[f64],
    h: f64,
    loss: impl Fn(&Scene) -> f64,
) -> (f64, f64) {
    let (mut plus, mut minus) = perturbed(scene, dir, h);
    let stride = scene.splats[0].param_count();
    let mut analytic = 0.0;
    for (i, (p, m)) in plus.splats.iter_mut().zip(minus.splats.iter_mut()).enumerate() {
        for k in 0..stride {
            if dir[i * stride + k] != 0.0 {
                analytic += grads[i * stride + k] * (*p.param_mut(k) as f64 - *m.param_mut(k) as f64);
            }
        }
    }
    (analytic, loss(&plus) - loss(&minus))
}

pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

// Independent recomputation of the toy features: explicit block loops and a
// textbook hexcone hue, no shared helpers with the library.

pub fn oracle_hue_sat(p: &[f64]) -> (f64, f64) {
    let (r, g, b) = (p[0], p[1], p[2]);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let c = max - min;
    if max <= 0.0 {
        return (0.0, 0.0);
    }
    let h = if c == 0.0 {
        0.0
    } else if max == r {
        let h = 60.0 * (g - b) / c;
        if h < 0.0 {
            h + 360.0
        } else {
            h
        }
    } else if max == g {
        60.0 * (b - r) / c + 120.0
    } else {
        60.0 * (r - g) / c + 240.0
    };
    (h, c / max)
}

pub fn unit(v: Vec<f64>) -> Vec<f64> {
    let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        v
    } else {
        v.into_iter().map(|x| x / n).collect()
    }
}

pub fn oracle_image_features(img: &ImageBuffer) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    assert!(w % 8 == 0 && h % 8 == 0, "oracle assumes exact 8×8 blocks");
    let (bw, bh) = (w / 8, h / 8);
    let mut luma = Vec::new();
    for cy in 0..8 {
        for cx in 0..8 {
            let mut s = 0.0;
            for y in cy * bh..(cy + 1) * bh {
                for x in cx * bw..(cx + 1) * bw {
                    let p = img.pixel(x, y);
                    s += 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2];
                }
            }
            luma.push(s / (bw * bh) as f64);
        }
    }
    let mut hist = vec![0.0; 12];
    for y in 0..h {
        for x in 0..w {
            let (hue, sat) = oracle_hue_sat(img.pixel(x, y));
            // nearest multiple of 30°, 360 wraps to red
            let bin = ((hue + 15.0) / 30.0).floor() as usize % 12;
            hist[bin] += sat;
        }
    }
    let mut v = unit(luma);
    v.extend(unit(hist));
    unit(v)
}

pub fn oracle_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
