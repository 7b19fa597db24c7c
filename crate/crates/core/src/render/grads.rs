use crate::scene::layout;

/// Per-splat parameter gradients in scene order, flat layout per [`layout`].
#[derive(Clone, Debug, PartialEq)]
pub struct RenderGradients {
    coeffs: usize,
    params: Vec<f64>,
    /// Gradient with respect to the projected pixel-space mean.
    pub mean2d: Vec<[f64; 2]>,
    /// Whether the splat survived culling in this view.
    pub visible: Vec<bool>,
}

impl RenderGradients {
    pub fn zeros(n_splats: usize, coeffs: usize) -> Self {
        Self {
            coeffs,
            params: vec![0.0; n_splats * layout::len(coeffs)],
            mean2d: vec![[0.0; 2]; n_splats],
            visible: vec![false; n_splats],
        }
    }

    pub fn len(&self) -> usize {
        self.mean2d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean2d.is_empty()
    }

    pub fn sh_coeffs(&self) -> usize {
        self.coeffs
    }

    pub fn stride(&self) -> usize {
        layout::len(self.coeffs)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn splat(&self, i: usize) -> &[f64] {
        let s = self.stride();
        &self.params[i * s..(i + 1) * s]
    }

    pub fn splat_mut(&mut self, i: usize) -> &mut [f64] {
        let s = self.stride();
        &mut self.params[i * s..(i + 1) * s]
    }

    pub fn position(&self, i: usize) -> [f64; 3] {
        let p = self.splat(i);
        [p[0], p[1], p[2]]
    }

    pub fn rotation(&self, i: usize) -> [f64; 4] {
        let p = &self.splat(i)[layout::ROTATION..];
        [p[0], p[1], p[2], p[3]]
    }

    pub fn log_scale(&self, i: usize) -> [f64; 3] {
        let p = &self.splat(i)[layout::LOG_SCALE..];
        [p[0], p[1], p[2]]
    }

    pub fn opacity_logit(&self, i: usize) -> f64 {
        self.splat(i)[layout::OPACITY]
    }

    pub fn sh(&self, i: usize) -> &[f64] {
        &self.splat(i)[layout::SH..]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, k: f64) {
        for v in &mut self.params {
            *v *= k;
        }
        for m in &mut self.mean2d {
            m[0] *= k;
            m[1] *= k;
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.params.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}
