//! Real spherical-harmonic basis up to degree 3, with direction gradients.

use crate::error::{Error, Result};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_SH_DEGREE: usize = 3;

/// Coefficients per colour channel for a given degree: `(degree + 1)^2`.
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Degree whose coefficient count is `count`, if any.
pub fn degree_for_count(count: usize) -> Option<usize> {
    (0..=MAX_SH_DEGREE).find(|&d| coeff_count(d) == count)
}

/// Basis values `Y_k(dir)` for `k < coeff_count(degree)`; remaining slots are zero.
pub fn basis(degree: usize, dir: [f64; 3]) -> [f64; 16] {
    basis_with_grad(degree, dir).0
}

/// Basis values and their gradients with respect to the (unnormalised) direction components.
pub fn basis_with_grad(degree: usize, dir: [f64; 3]) -> ([f64; 16], [[f64; 3]; 16]) {
    let mut y = [0.0; 16];
    let mut g = [[0.0; 3]; 16];
    let [x, yy, z] = dir;
    y[0] = SH_C0;
    if degree >= 1 {
        y[1] = -SH_C1 * yy;
        y[2] = SH_C1 * z;
        y[3] = -SH_C1 * x;
        g[1] = [0.0, -SH_C1, 0.0];
        g[2] = [0.0, 0.0, SH_C1];
        g[3] = [-SH_C1, 0.0, 0.0];
    }
    if degree >= 2 {
        let (xx, y2, zz) = (x * x, yy * yy, z * z);
        y[4] = SH_C2[0] * x * yy;
        y[5] = SH_C2[1] * yy * z;
        y[6] = SH_C2[2] * (2.0 * zz - xx - y2);
        y[7] = SH_C2[3] * x * z;
        y[8] = SH_C2[4] * (xx - y2);
        g[4] = [SH_C2[0] * yy, SH_C2[0] * x, 0.0];
        g[5] = [0.0, SH_C2[1] * z, SH_C2[1] * yy];
        g[6] = [-2.0 * SH_C2[2] * x, -2.0 * SH_C2[2] * yy, 4.0 * SH_C2[2] * z];
        g[7] = [SH_C2[3] * z, 0.0, SH_C2[3] * x];
        g[8] = [2.0 * SH_C2[4] * x, -2.0 * SH_C2[4] * yy, 0.0];
    }
    if degree >= 3 {
        let (xx, y2, zz) = (x * x, yy * yy, z * z);
        y[9] = SH_C3[0] * yy * (3.0 * xx - y2);
        y[10] = SH_C3[1] * x * yy * z;
        y[11] = SH_C3[2] * yy * (4.0 * zz - xx - y2);
        y[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * y2);
        y[13] = SH_C3[4] * x * (4.0 * zz - xx - y2);
        y[14] = SH_C3[5] * z * (xx - y2);
        y[15] = SH_C3[6] * x * (xx - 3.0 * y2);
        g[9] = [SH_C3[0] * 6.0 * x * yy, SH_C3[0] * (3.0 * xx - 3.0 * y2), 0.0];
        g[10] = [SH_C3[1] * yy * z, SH_C3[1] * x * z, SH_C3[1] * x * yy];
        g[11] = [
            SH_C3[2] * (-2.0 * x * yy),
            SH_C3[2] * (4.0 * zz - xx - 3.0 * y2),
            SH_C3[2] * 8.0 * yy * z,
        ];
        g[12] = [
            SH_C3[3] * (-6.0 * x * z),
            SH_C3[3] * (-6.0 * yy * z),
            SH_C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * y2),
        ];
        g[13] = [
            SH_C3[4] * (4.0 * zz - 3.0 * xx - y2),
            SH_C3[4] * (-2.0 * x * yy),
            SH_C3[4] * 8.0 * x * z,
        ];
        g[14] = [
            SH_C3[5] * 2.0 * x * z,
            SH_C3[5] * (-2.0 * yy * z),
            SH_C3[5] * (xx - y2),
        ];
        g[15] = [
            SH_C3[6] * (3.0 * xx - 3.0 * y2),
            SH_C3[6] * (-6.0 * x * yy),
            0.0,
        ];
    }
    (y, g)
}

/// Evaluates SH colour for a unit view direction: `sum_k Y_k c_k + 0.5`, clamped to `[0, 1]`.
pub fn sh_to_rgb(coefficients: &[[f32; 3]], degree: usize, view_dir: [f64; 3]) -> Result<[f64; 3]> {
    if coefficients.len() != coeff_count(degree) {
        return Err(Error::InvalidArgument(format!(
            "{} SH coefficients for degree {degree} (expected {})",
            coefficients.len(),
            coeff_count(degree)
        )));
    }
    let y = basis(degree, view_dir);
    Ok(raw_rgb(coefficients, &y).map(|v| v.clamp(0.0, 1.0)))
}

/// Unclamped `sum_k Y_k c_k + 0.5`.
pub(crate) fn raw_rgb(coefficients: &[[f32; 3]], y: &[f64; 16]) -> [f64; 3] {
    let mut rgb = [0.5; 3];
    for (k, c) in coefficients.iter().enumerate() {
        for ch in 0..3 {
            rgb[ch] += y[k] * c[ch] as f64;
        }
    }
    rgb
}

/// DC coefficient that produces `rgb` under degree-0 evaluation.
pub fn rgb_to_dc(rgb: [f64; 3]) -> [f32; 3] {
    rgb.map(|v| ((v - 0.5) / SH_C0) as f32)
}
