use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::RenderGradients;
use crate::scene::{layout, Scene};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// Per-group learning rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningRates {
    pub position: f64,
    pub color: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            color: 2.5e-3,
            opacity: 5e-2,
            scale: 5e-3,
            rotation: 1e-3,
        }
    }
}

impl LearningRates {
    /// Learning rate for entry `k` of a splat's flat parameter vector.
    pub fn for_param(&self, k: usize) -> f64 {
        match k {
            0..=2 => self.position,
            3..=6 => self.rotation,
            7..=9 => self.scale,
            10 => self.opacity,
            _ => self.color,
        }
    }
}

/// Adam moments plus the densification statistics, one row per splat.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    stride: usize,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
    /// Sum over observations of the NDC-space mean gradient norm.
    pub grad_accum: Vec<f64>,
    /// Number of views in which the splat was visible since the last reset.
    pub grad_count: Vec<u32>,
    pub step: u64,
}

impl OptimState {
    pub fn new(scene: &Scene) -> Self {
        let stride = layout::len(scene.sh_coeffs());
        let n = scene.len();
        Self {
            stride,
            m: vec![0.0; n * stride],
            v: vec![0.0; n * stride],
            grad_accum: vec![0.0; n],
            grad_count: vec![0; n],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.grad_count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grad_count.is_empty()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.m[i * self.stride..(i + 1) * self.stride]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.v[i * self.stride..(i + 1) * self.stride]
    }

    /// Adds one view's screen-space gradient statistics. `size` is the render
    /// size, used to convert pixel gradients to NDC units.
    pub fn accumulate(&mut self, grads: &RenderGradients, size: (usize, usize)) {
        let (hw, hh) = (0.5 * size.0 as f64, 0.5 * size.1 as f64);
        for i in 0..self.len().min(grads.len()) {
            if grads.visible[i] {
                let [gx, gy] = grads.mean2d[i];
                self.grad_accum[i] += (gx * hw).hypot(gy * hh);
                self.grad_count[i] += 1;
            }
        }
    }

    /// Rebuilds rows after densification: `rows[j] = Some(i)` copies row `i`
    /// of the old state, `None` starts a fresh row. Statistics are reset.
    pub(crate) fn remap(&mut self, rows: &[Option<usize>]) {
        let s = self.stride;
        let mut m = vec![0.0; rows.len() * s];
        let mut v = vec![0.0; rows.len() * s];
        for (j, src) in rows.iter().enumerate() {
            if let Some(i) = *src {
                m[j * s..(j + 1) * s].copy_from_slice(&self.m[i * s..(i + 1) * s]);
                v[j * s..(j + 1) * s].copy_from_slice(&self.v[i * s..(i + 1) * s]);
            }
        }
        self.m = m;
        self.v = v;
        self.grad_accum = vec![0.0; rows.len()];
        self.grad_count = vec![0; rows.len()];
    }
}

/// One Adam update of every splat parameter, then quaternion renormalisation.
///
/// Entries whose gradient is exactly zero (for example splats outside the
/// current view) keep their value; their moments still decay.
pub fn adam_step(scene: &mut Scene, grads: &RenderGradients, state: &mut OptimState, lr: &LearningRates) -> Result<()> {
    if grads.len() != scene.len() || state.len() != scene.len() || grads.stride() != state.stride {
        return Err(Error::ShapeMismatch(format!(
            "scene has {} splats, gradients {}, optimizer state {}",
            scene.len(),
            grads.len(),
            state.len()
        )));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients"));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    let s = state.stride;
    for (i, splat) in scene.splats.iter_mut().enumerate() {
        let g = grads.splat(i);
        for k in 0..s {
            let idx = i * s + k;
            let gk = g[k];
            state.m[idx] = BETA1 * state.m[idx] + (1.0 - BETA1) * gk;
            state.v[idx] = BETA2 * state.v[idx] + (1.0 - BETA2) * gk * gk;
            if gk == 0.0 {
                continue;
            }
            let m_hat = state.m[idx] / bc1;
            let v_hat = state.v[idx] / bc2;
            let p = splat.param_mut(k);
            *p = (*p as f64 - lr.for_param(k) * m_hat / (v_hat.sqrt() + EPSILON)) as f32;
        }
        splat.normalize_rotation();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::GaussianSplat;

    fn one_splat() -> Scene {
        Scene::with_splats(vec![GaussianSplat::isotropic([0.0; 3], 0.1, 0.5, [0.5; 3])], 0, [1.0; 3])
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let mut scene = one_splat();
        let before = scene.clone();
        let mut st = OptimState::new(&scene);
        st.m[0] = 1.0;
        st.v[0] = 1.0;
        let g = RenderGradients::zeros(1, 1);
        adam_step(&mut scene, &g, &mut st, &LearningRates::default()).unwrap();
        assert_eq!(scene, before);
        assert_eq!(st.m[0], BETA1);
        assert_eq!(st.v[0], BETA2);
    }

    #[test]
    fn first_step_is_unit_step() {
        let mut scene = one_splat();
        let mut st = OptimState::new(&scene);
        let mut g = RenderGradients::zeros(1, 1);
        g.splat_mut(0)[layout::SH] = 1.0;
        let lr = LearningRates { color: 0.01, ..Default::default() };
        let before = scene.splats[0].sh[0][0] as f64;
        adam_step(&mut scene, &g, &mut st, &lr).unwrap();
        let delta = scene.splats[0].sh[0][0] as f64 - before;
        assert!((delta + 0.01).abs() < 1e-7, "{delta}");
    }

    #[test]
    fn quadratic_loss_decreases_over_two_steps() {
        // L = (x − 3)², simulated on the opacity logit
        let mut scene = one_splat();
        let mut st = OptimState::new(&scene);
        let lr = LearningRates { opacity: 0.1, ..Default::default() };
        let loss = |s: &Scene| (s.splats[0].opacity_logit as f64 - 3.0).powi(2);
        let mut last = loss(&scene);
        for _ in 0..2 {
            let mut g = RenderGradients::zeros(1, 1);
            g.splat_mut(0)[layout::OPACITY] = 2.0 * (scene.splats[0].opacity_logit as f64 - 3.0);
            adam_step(&mut scene, &g, &mut st, &lr).unwrap();
            let l = loss(&scene);
            assert!(l < last);
            last = l;
        }
    }

    #[test]
    fn quaternion_is_unit_after_step() {
        let mut scene = one_splat();
        let mut st = OptimState::new(&scene);
        let mut g = RenderGradients::zeros(1, 1);
        g.splat_mut(0)[layout::ROTATION + 1] = 5.0;
        adam_step(&mut scene, &g, &mut st, &LearningRates { rotation: 0.3, ..Default::default() }).unwrap();
        let q = scene.splats[0].rotation_f64();
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut scene = one_splat();
        let mut st = OptimState::new(&scene);
        let g = RenderGradients::zeros(2, 1);
        assert!(adam_step(&mut scene, &g, &mut st, &LearningRates::default()).is_err());
    }
}
