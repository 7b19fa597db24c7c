use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Offset of the cosine schedule.
const COSINE_S: f64 = 0.008;

/// SDS weighting `w(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `w(t) = c`.
    Constant(f64),
    /// `w(t) = 1 − ᾱ(t)`.
    OneMinusAlphaBar,
}

impl Default for Weighting {
    fn default() -> Self {
        Weighting::Constant(1.0)
    }
}

impl Weighting {
    pub fn weight(&self, t: f64) -> f64 {
        match *self {
            Weighting::Constant(c) => c,
            Weighting::OneMinusAlphaBar => 1.0 - alpha_bar(t),
        }
    }
}

fn cosine_f(t: f64) -> f64 {
    ((t + COSINE_S) / (1.0 + COSINE_S) * std::f64::consts::FRAC_PI_2).cos().powi(2)
}

/// Cumulative signal level `ᾱ(t) = f(t)/f(0)` of the cosine schedule, `t ∈ [0, 1]`.
pub fn alpha_bar(t: f64) -> f64 {
    (cosine_f(t.clamp(0.0, 1.0)) / cosine_f(0.0)).clamp(0.0, 1.0)
}

/// `z_t = √ᾱ(t)·z + √(1 − ᾱ(t))·ε`.
pub fn add_noise(z: &ImageBuffer, t: f64, eps: &ImageBuffer) -> Result<ImageBuffer> {
    let a = alpha_bar(t);
    z.zip_map(eps, |zv, ev| a.sqrt() * zv + (1.0 - a).sqrt() * ev)
}

/// Timestep range with a linearly decreasing upper bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub t_min: f64,
    pub t_max: f64,
    pub total_steps: usize,
    pub weighting: Weighting,
}

impl NoiseSchedule {
    pub fn new(t_min: f64, t_max: f64, total_steps: usize, weighting: Weighting) -> Result<Self> {
        if !(t_min > 0.0 && t_min <= t_max && t_max < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "timestep range must satisfy 0 < t_min <= t_max < 1, got [{t_min}, {t_max}]"
            )));
        }
        Ok(Self {
            t_min,
            t_max,
            total_steps,
            weighting,
        })
    }

    /// `u(step) = t_max − (t_max − t_min)·step/total`, reaching `t_min` at `step = total`.
    pub fn upper_bound(&self, step: usize) -> f64 {
        if self.total_steps == 0 || step >= self.total_steps {
            return self.t_min;
        }
        self.t_max - (self.t_max - self.t_min) * step as f64 / self.total_steps as f64
    }

    /// Uniform draw from `[t_min, u(step)]`.
    pub fn sample_timestep(&self, step: usize, rng: &mut impl Rng) -> f64 {
        let u = self.upper_bound(step);
        if u <= self.t_min {
            return self.t_min;
        }
        let t = self.t_min + (u - self.t_min) * rng.random::<f64>();
        t.clamp(self.t_min, u)
    }

    pub fn weight(&self, t: f64) -> f64 {
        self.weighting.weight(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn defaults(total: usize) -> NoiseSchedule {
        NoiseSchedule::new(0.02, 0.98, total, Weighting::default()).unwrap()
    }

    #[test]
    fn upper_bound_examples() {
        let s = defaults(500);
        assert_eq!(s.upper_bound(0), 0.98);
        assert_abs_diff_eq!(s.upper_bound(250), 0.5, epsilon = 1e-9);
        assert_eq!(s.upper_bound(500), 0.02);
        assert_eq!(s.sample_timestep(500, &mut ChaCha8Rng::seed_from_u64(0)), 0.02);
    }

    #[test]
    fn alpha_bar_endpoints_and_midpoint() {
        assert_abs_diff_eq!(alpha_bar(0.0), 1.0, epsilon = 1e-15);
        assert!(alpha_bar(1.0) < 1e-30);
        // cos²(π/2 · 0.508/1.008) / cos²(π/2 · 0.008/1.008), evaluated independently
        let f = |t: f64| ((t + 0.008) / 1.008 * std::f64::consts::PI / 2.0).cos().powi(2);
        assert_abs_diff_eq!(alpha_bar(0.5), f(0.5) / f(0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(alpha_bar(0.5), 0.493_843_590_440_637_75, epsilon = 1e-12);
    }

    #[test]
    fn noising_limits() {
        let z = ImageBuffer::filled(2, 2, 3, 0.3);
        let e = ImageBuffer::filled(2, 2, 3, -1.0);
        let near0 = add_noise(&z, 0.0, &e).unwrap();
        assert!(near0.data().iter().all(|&v| (v - 0.3).abs() < 1e-12));
        let near1 = add_noise(&z, 1.0, &e).unwrap();
        assert!(near1.data().iter().all(|&v| (v + 1.0).abs() < 1e-12));
        assert!(add_noise(&z, 0.5, &ImageBuffer::new(3, 2, 3)).is_err());
    }

    #[test]
    fn invalid_range_rejected() {
        assert!(NoiseSchedule::new(0.5, 0.2, 10, Weighting::default()).is_err());
        assert!(NoiseSchedule::new(0.0, 0.2, 10, Weighting::default()).is_err());
        assert!(NoiseSchedule::new(0.1, 1.0, 10, Weighting::default()).is_err());
    }

    proptest! {
        #[test]
        fn samples_stay_in_range(seed in any::<u64>(), total in 1usize..2000, frac in 0.0f64..1.0) {
            let s = defaults(total);
            let step = ((total as f64) * frac) as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = s.sample_timestep(step, &mut rng);
            prop_assert!(t >= 0.02 && t <= s.upper_bound(step));
        }
    }
}
