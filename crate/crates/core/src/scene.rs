//! Gaussian splats and the closed-form kernels that act on them.

use nalgebra::{Matrix3, Vector3};

use crate::error::{ensure_finite, Error, Result};
use crate::sh;

/// Lower clamp on activated per-axis scale; keeps covariances invertible.
pub const SCALE_FLOOR: f64 = 1e-6;
/// Upper clamp on activated scale: ten times the normalised (unit-sphere) scene extent.
pub const SCALE_CEILING: f64 = 10.0;

/// Offsets of each parameter group inside a splat's flat parameter vector.
pub mod layout {
    pub const POSITION: usize = 0;
    pub const ROTATION: usize = 3;
    pub const LOG_SCALE: usize = 7;
    pub const OPACITY: usize = 10;
    pub const SH: usize = 11;

    /// Length of the flat parameter vector for `coeffs` SH coefficients per channel.
    pub const fn len(coeffs: usize) -> usize {
        SH + 3 * coeffs
    }
}

/// One anisotropic 3D Gaussian.
///
/// Parameters are stored unconstrained (log-scale, opacity logit) so that plain
/// gradient steps keep the activated values valid. Storage is `f32` to match the
/// on-disk format; all math runs in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSplat {
    pub position: [f32; 3],
    /// Quaternion `(w, x, y, z)`.
    pub rotation: [f32; 4],
    pub log_scale: [f32; 3],
    pub opacity_logit: f32,
    /// `(degree + 1)^2` RGB coefficient triples; index 0 is the DC term.
    pub sh: Vec<[f32; 3]>,
}

impl GaussianSplat {
    /// Isotropic splat with degree-0 colour `rgb`.
    pub fn isotropic(position: [f64; 3], scale: f64, opacity: f64, rgb: [f64; 3]) -> Self {
        Self {
            position: position.map(|v| v as f32),
            rotation: [1.0, 0.0, 0.0, 0.0],
            log_scale: [scale.ln() as f32; 3],
            opacity_logit: logit(opacity) as f32,
            sh: vec![sh::rgb_to_dc(rgb)],
        }
    }

    pub fn position_f64(&self) -> Vector3<f64> {
        Vector3::new(
            self.position[0] as f64,
            self.position[1] as f64,
            self.position[2] as f64,
        )
    }

    pub fn rotation_f64(&self) -> [f64; 4] {
        self.rotation.map(|v| v as f64)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit as f64)
    }

    pub fn scale(&self) -> [f64; 3] {
        self.log_scale.map(|v| activate_scale(v as f64))
    }

    pub fn param_count(&self) -> usize {
        layout::len(self.sh.len())
    }

    /// Mutable access to one entry of the flat parameter vector (see [`layout`]).
    pub fn param_mut(&mut self, index: usize) -> &mut f32 {
        match index {
            0..=2 => &mut self.position[index],
            3..=6 => &mut self.rotation[index - layout::ROTATION],
            7..=9 => &mut self.log_scale[index - layout::LOG_SCALE],
            10 => &mut self.opacity_logit,
            _ => {
                let k = index - layout::SH;
                &mut self.sh[k / 3][k % 3]
            }
        }
    }

    pub fn param(&self, index: usize) -> f32 {
        match index {
            0..=2 => self.position[index],
            3..=6 => self.rotation[index - layout::ROTATION],
            7..=9 => self.log_scale[index - layout::LOG_SCALE],
            10 => self.opacity_logit,
            _ => {
                let k = index - layout::SH;
                self.sh[k / 3][k % 3]
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
            && self.sh.iter().flatten().all(|v| v.is_finite())
    }

    /// Rescales the quaternion to unit length (identity if degenerate).
    pub fn normalize_rotation(&mut self) {
        let q = self.rotation_f64();
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if n > 1e-12 && n.is_finite() {
            self.rotation = q.map(|v| (v / n) as f32);
        } else {
            self.rotation = [1.0, 0.0, 0.0, 0.0];
        }
    }
}

/// A set of splats plus the shared colour settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub splats: Vec<GaussianSplat>,
    pub sh_degree: usize,
    pub background: [f64; 3],
}

impl Scene {
    pub fn new(sh_degree: usize, background: [f64; 3]) -> Self {
        Self {
            splats: Vec::new(),
            sh_degree,
            background,
        }
    }

    pub fn with_splats(splats: Vec<GaussianSplat>, sh_degree: usize, background: [f64; 3]) -> Self {
        Self {
            splats,
            sh_degree,
            background,
        }
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    pub fn sh_coeffs(&self) -> usize {
        sh::coeff_count(self.sh_degree)
    }

    /// Checks SH layout and finiteness of every splat.
    pub fn validate(&self) -> Result<()> {
        if self.sh_degree > sh::MAX_SH_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "SH degree {} exceeds {}",
                self.sh_degree,
                sh::MAX_SH_DEGREE
            )));
        }
        let k = self.sh_coeffs();
        for (i, s) in self.splats.iter().enumerate() {
            if s.sh.len() != k {
                return Err(Error::ShapeMismatch(format!(
                    "splat {i} has {} SH coefficients, scene degree {} needs {k}",
                    s.sh.len(),
                    self.sh_degree
                )));
            }
            if !s.is_finite() {
                return Err(Error::NonFinite("splat parameters"));
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub(crate) fn activate_scale(log_scale: f64) -> f64 {
    log_scale.exp().clamp(SCALE_FLOOR, SCALE_CEILING)
}

/// Activated opacity and per-axis scale of a splat.
pub fn activate(splat: &GaussianSplat) -> (f64, [f64; 3]) {
    (splat.opacity(), splat.scale())
}

/// Normalised copy of a quaternion; identity when degenerate.
pub fn normalize_quat(q: [f64; 4]) -> [f64; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if n > 1e-12 {
        q.map(|v| v / n)
    } else {
        [1.0, 0.0, 0.0, 0.0]
    }
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn rotation_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient on `R(q / |q|)` back to the raw quaternion `q`.
pub(crate) fn rotation_matrix_vjp(q_raw: [f64; 4], d_r: &Matrix3<f64>) -> [f64; 4] {
    let n = (q_raw.iter().map(|v| v * v).sum::<f64>()).sqrt().max(1e-12);
    let [w, x, y, z] = q_raw.map(|v| v / n);
    let dw = Matrix3::new(0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0);
    let dx = Matrix3::new(
        0.0,
        2.0 * y,
        2.0 * z,
        2.0 * y,
        -4.0 * x,
        -2.0 * w,
        2.0 * z,
        2.0 * w,
        -4.0 * x,
    );
    let dy = Matrix3::new(
        -4.0 * y,
        2.0 * x,
        2.0 * w,
        2.0 * x,
        0.0,
        2.0 * z,
        -2.0 * w,
        2.0 * z,
        -4.0 * y,
    );
    let dz = Matrix3::new(
        -4.0 * z,
        -2.0 * w,
        2.0 * x,
        2.0 * w,
        -4.0 * z,
        2.0 * y,
        2.0 * x,
        2.0 * y,
        0.0,
    );
    let g_unit = [
        d_r.component_mul(&dw).sum(),
        d_r.component_mul(&dx).sum(),
        d_r.component_mul(&dy).sum(),
        d_r.component_mul(&dz).sum(),
    ];
    let qn = [w, x, y, z];
    let dot: f64 = g_unit.iter().zip(&qn).map(|(a, b)| a * b).sum();
    [0, 1, 2, 3].map(|i| (g_unit[i] - qn[i] * dot) / n)
}

/// `Σ = R S Sᵀ Rᵀ` for quaternion `r` and per-axis standard deviations `s`.
pub fn covariance_from_rotation_scale(r: [f64; 4], s: [f64; 3]) -> Result<Matrix3<f64>> {
    ensure_finite(&r, "rotation")?;
    ensure_finite(&s, "scale")?;
    if s.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {s:?}")));
    }
    let m = rotation_matrix(normalize_quat(r)) * Matrix3::from_diagonal(&Vector3::from(s));
    Ok(m * m.transpose())
}

/// Unnormalised Gaussian `exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ))`.
pub fn eval_gaussian(splat: &GaussianSplat, x: [f64; 3]) -> Result<f64> {
    ensure_finite(&x, "query point")?;
    if !splat.is_finite() {
        return Err(Error::NonFinite("splat parameters"));
    }
    Ok(mahalanobis_kernel(splat, &Vector3::from(x)))
}

/// `exp(-½ dᵀ Σ⁻¹ d)` evaluated in the splat's local frame (no matrix inverse needed).
pub(crate) fn mahalanobis_kernel(splat: &GaussianSplat, x: &Vector3<f64>) -> f64 {
    gaussian_kernel(splat.rotation_f64(), splat.scale(), &(x - splat.position_f64()))
}

/// Kernel for rotation `q`, scales `s` and offset `d` from the mean.
pub(crate) fn gaussian_kernel(q: [f64; 4], s: [f64; 3], d: &Vector3<f64>) -> f64 {
    let local = rotation_matrix(normalize_quat(q)).transpose() * d;
    let m = (local[0] / s[0]).powi(2) + (local[1] / s[1]).powi(2) + (local[2] / s[2]).powi(2);
    (-0.5 * m).exp()
}
