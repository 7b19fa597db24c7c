use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{OptimState, ReconConfig};
use crate::scene::{normalize_quat, rotation_matrix, Scene};

/// What one densify/prune call did to the scene.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DensifyReport {
    pub step: usize,
    pub before: usize,
    pub cloned: usize,
    /// Parents split; each is replaced by two children.
    pub split: usize,
    pub pruned: usize,
    pub after: usize,
}

impl DensifyReport {
    /// `after = before + cloned + split − pruned`.
    pub fn is_conserved(&self) -> bool {
        self.before + self.cloned + self.split == self.after + self.pruned
    }
}

/// Clones small and splits large splats whose mean NDC-space positional
/// gradient reached the threshold, then prunes splats with opacity below
/// `prune_opacity`. `extent` is the scene extent the clone/split size test is
/// relative to. Optimizer rows follow their splats; new rows start at zero and
/// the gradient statistics are reset.
pub fn densify_and_prune(
    scene: &mut Scene,
    state: &mut OptimState,
    config: &ReconConfig,
    extent: f64,
    rng: &mut impl Rng,
) -> DensifyReport {
    let before = scene.len();
    let size_limit = config.percent_dense * extent;
    let mut keep: Vec<usize> = Vec::with_capacity(before);
    let mut clones = Vec::new();
    let mut splits = Vec::new();
    for i in 0..before {
        let count = state.grad_count[i];
        let mean = if count > 0 { state.grad_accum[i] / count as f64 } else { 0.0 };
        if mean >= config.densify_grad_threshold {
            let max_scale = scene.splats[i].scale().into_iter().fold(0.0, f64::max);
            if max_scale <= size_limit {
                keep.push(i);
                clones.push(i);
            } else {
                splits.push(i);
            }
        } else {
            keep.push(i);
        }
    }

    let mut splats = Vec::with_capacity(keep.len() + clones.len() + 2 * splits.len());
    let mut rows: Vec<Option<usize>> = Vec::with_capacity(splats.capacity());
    for &i in &keep {
        splats.push(scene.splats[i].clone());
        rows.push(Some(i));
    }
    for &i in &clones {
        splats.push(scene.splats[i].clone());
        rows.push(None);
    }
    let shrink = config.split_scale_factor.ln() as f32;
    for &i in &splits {
        let parent = &scene.splats[i];
        let r = rotation_matrix(normalize_quat(parent.rotation_f64()));
        let s = parent.scale();
        let mu = parent.position_f64();
        for _ in 0..2 {
            let local = Vector3::new(
                s[0] * rng.sample::<f64, _>(StandardNormal),
                s[1] * rng.sample::<f64, _>(StandardNormal),
                s[2] * rng.sample::<f64, _>(StandardNormal),
            );
            let p = mu + r * local;
            let mut child = parent.clone();
            child.position = [p.x as f32, p.y as f32, p.z as f32];
            for ls in &mut child.log_scale {
                *ls -= shrink;
            }
            splats.push(child);
            rows.push(None);
        }
    }

    let mut pruned = 0;
    let mut kept_splats = Vec::with_capacity(splats.len());
    let mut kept_rows = Vec::with_capacity(splats.len());
    for (s, row) in splats.into_iter().zip(rows) {
        if s.opacity() < config.prune_opacity {
            pruned += 1;
        } else {
            kept_splats.push(s);
            kept_rows.push(row);
        }
    }
    scene.splats = kept_splats;
    state.remap(&kept_rows);
    DensifyReport {
        step: state.step as usize,
        before,
        cloned: clones.len(),
        split: splits.len(),
        pruned,
        after: scene.len(),
    }
}
