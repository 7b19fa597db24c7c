use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};

use super::RenderSettings;
use crate::camera::Camera;
use crate::scene::{activate_scale, layout, normalize_quat, rotation_matrix, rotation_matrix_vjp, sigmoid, GaussianSplat};
use crate::sh;

/// Screen-space footprint of one splat.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedSplat {
    /// Pixel-space mean.
    pub mean: [f64; 2],
    /// 2D covariance `(xx, xy, yy)` including the low-pass dilation.
    pub cov: [f64; 3],
    /// Inverse covariance `(a, b, c)`; power is `-½(a dx² + 2b dx dy + c dy²)`.
    pub conic: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    /// Half-widths in pixels of the box outside which the splat cannot contribute.
    pub extent: [f64; 2],
}

/// Intermediate quantities shared by the forward projection and its adjoint.
struct Terms {
    p_cam: Vector3<f64>,
    q_raw: [f64; 4],
    rot: Matrix3<f64>,
    scale: [f64; 3],
    scale_free: [bool; 3],
    m: Matrix3<f64>,
    sigma3: Matrix3<f64>,
    t: Matrix2x3<f64>,
    cov2: Matrix2<f64>,
    view: Vector3<f64>,
    degree: usize,
    sh_y: [f64; 16],
    rgb_raw: [f64; 3],
    opacity: f64,
}

fn terms(splat: &GaussianSplat, camera: &Camera, settings: &RenderSettings) -> Option<Terms> {
    let mu = splat.position_f64();
    let p_cam = camera.world_to_camera(&mu);
    if !(p_cam.z > settings.near) {
        return None;
    }
    let q_raw = splat.rotation_f64();
    let rot = rotation_matrix(normalize_quat(q_raw));
    let mut scale = [0.0; 3];
    let mut scale_free = [false; 3];
    for k in 0..3 {
        let raw = (splat.log_scale[k] as f64).exp();
        scale[k] = activate_scale(splat.log_scale[k] as f64);
        scale_free[k] = raw == scale[k];
    }
    let m = rot * Matrix3::from_diagonal(&Vector3::from(scale));
    let sigma3 = m * m.transpose();
    let f = camera.focal();
    let z = p_cam.z;
    let j = Matrix2x3::new(
        f / z,
        0.0,
        -f * p_cam.x / (z * z),
        0.0,
        f / z,
        -f * p_cam.y / (z * z),
    );
    let t = j * camera.rotation();
    let cov2 = t * sigma3 * t.transpose() + Matrix2::identity() * settings.low_pass;
    let degree = sh::degree_for_count(splat.sh.len())?;
    let view = mu - camera.position();
    let n = view.norm();
    let dir = if n > 0.0 { view / n } else { Vector3::z() };
    let sh_y = sh::basis(degree, [dir.x, dir.y, dir.z]);
    let rgb_raw = sh::raw_rgb(&splat.sh, &sh_y);
    Some(Terms {
        p_cam,
        q_raw,
        rot,
        scale,
        scale_free,
        m,
        sigma3,
        t,
        cov2,
        view,
        degree,
        sh_y,
        rgb_raw,
        opacity: sigmoid(splat.opacity_logit as f64),
    })
}

/// Projects a splat into `camera`; `None` when it is behind the near plane,
/// degenerate, too faint to ever pass the contribution threshold, or entirely
/// outside the image.
pub fn project_splat(splat: &GaussianSplat, camera: &Camera, settings: &RenderSettings) -> Option<ProjectedSplat> {
    let tm = terms(splat, camera, settings)?;
    let (a, b, c) = (tm.cov2[(0, 0)], tm.cov2[(0, 1)], tm.cov2[(1, 1)]);
    let det = a * c - b * b;
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let radius = if settings.min_contribution > 0.0 {
        if tm.opacity < settings.min_contribution {
            return None;
        }
        (2.0 * (tm.opacity / settings.min_contribution).ln()).sqrt().max(3.0)
    } else {
        f64::INFINITY
    };
    let f = camera.focal();
    let (cx, cy) = camera.principal_point();
    let p = ProjectedSplat {
        mean: [f * tm.p_cam.x / tm.p_cam.z + cx, f * tm.p_cam.y / tm.p_cam.z + cy],
        cov: [a, b, c],
        conic: [c / det, -b / det, a / det],
        depth: tm.p_cam.z,
        opacity: tm.opacity,
        color: tm.rgb_raw.map(|v| v.clamp(0.0, 1.0)),
        extent: [radius * a.sqrt(), radius * c.sqrt()],
    };
    super::tiles::pixel_range(&p, camera.width, camera.height)?;
    Some(p)
}

/// Gradient of the loss with respect to one splat's screen-space footprint.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct FootprintGrad {
    pub mean: [f64; 2],
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
}

impl FootprintGrad {
    pub fn add(&mut self, o: &FootprintGrad) {
        for k in 0..2 {
            self.mean[k] += o.mean[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

/// Chains a footprint gradient back to the splat's flat parameter vector.
pub(crate) fn projection_backward(
    splat: &GaussianSplat,
    camera: &Camera,
    settings: &RenderSettings,
    g: &FootprintGrad,
    out: &mut [f64],
) {
    let Some(tm) = terms(splat, camera, settings) else {
        return;
    };
    let f = camera.focal();
    let (x, y, z) = (tm.p_cam.x, tm.p_cam.y, tm.p_cam.z);
    let w = camera.rotation();

    // colour: clamped channels pass no gradient
    let mut d_raw = [0.0; 3];
    for ch in 0..3 {
        if tm.rgb_raw[ch] > 0.0 && tm.rgb_raw[ch] < 1.0 {
            d_raw[ch] = g.color[ch];
        }
    }
    for k in 0..splat.sh.len() {
        for ch in 0..3 {
            out[layout::SH + 3 * k + ch] += tm.sh_y[k] * d_raw[ch];
        }
    }
    let mut d_mu = Vector3::zeros();
    if tm.degree > 0 {
        let n = tm.view.norm();
        if n > 0.0 {
            let u = tm.view / n;
            let (_, grad_y) = sh::basis_with_grad(tm.degree, [u.x, u.y, u.z]);
            let mut d_dir = Vector3::zeros();
            for (k, coeff) in splat.sh.iter().enumerate() {
                let s: f64 = (0..3).map(|ch| coeff[ch] as f64 * d_raw[ch]).sum();
                d_dir += Vector3::from(grad_y[k]) * s;
            }
            d_mu += (d_dir - u * u.dot(&d_dir)) / n;
        }
    }

    out[layout::OPACITY] += g.opacity * tm.opacity * (1.0 - tm.opacity);

    // conic -> 2D covariance
    let q = tm.cov2.try_inverse().unwrap_or_else(Matrix2::zeros);
    let g_q = Matrix2::new(g.conic[0], 0.5 * g.conic[1], 0.5 * g.conic[1], g.conic[2]);
    let g_cov2 = -(q * g_q * q);

    // 2D covariance -> 3D covariance and the affine map T = J W
    let g_sigma3 = tm.t.transpose() * g_cov2 * tm.t;
    let g_t = 2.0 * g_cov2 * tm.t * tm.sigma3;
    let g_j = g_t * w.transpose();

    let mut d_p = Vector3::zeros();
    let fz2 = f / (z * z);
    d_p.x += g_j[(0, 2)] * -fz2;
    d_p.y += g_j[(1, 2)] * -fz2;
    d_p.z += (g_j[(0, 0)] + g_j[(1, 1)]) * -fz2
        + g_j[(0, 2)] * 2.0 * f * x / (z * z * z)
        + g_j[(1, 2)] * 2.0 * f * y / (z * z * z);

    // pixel mean
    d_p.x += g.mean[0] * f / z;
    d_p.y += g.mean[1] * f / z;
    d_p.z += -(g.mean[0] * f * x + g.mean[1] * f * y) / (z * z);
    d_mu += w.transpose() * d_p;
    for k in 0..3 {
        out[layout::POSITION + k] += d_mu[k];
    }

    // Σ3 = M Mᵀ with M = R S
    let g_m = 2.0 * g_sigma3 * tm.m;
    let mut g_r = Matrix3::zeros();
    for k in 0..3 {
        let mut ds = 0.0;
        for i in 0..3 {
            ds += g_m[(i, k)] * tm.rot[(i, k)];
            g_r[(i, k)] = g_m[(i, k)] * tm.scale[k];
        }
        if tm.scale_free[k] {
            out[layout::LOG_SCALE + k] += ds * tm.scale[k];
        }
    }
    let dq = rotation_matrix_vjp(tm.q_raw, &g_r);
    for k in 0..4 {
        out[layout::ROTATION + k] += dq[k];
    }
}
