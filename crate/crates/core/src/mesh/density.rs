use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::{covariance_from_rotation_scale, normalize_quat, rotation_matrix, Scene};

/// Blocks per axis of the partition.
pub const BLOCKS_PER_AXIS: usize = 16;

/// Whitened splat: `d(x) += opacity · exp(-½ |W (x − center)|²)`.
#[derive(Clone, Debug)]
struct Kernel {
    center: Vector3<f64>,
    whiten: Matrix3<f64>,
    opacity: f64,
}

impl Kernel {
    fn eval(&self, x: &Vector3<f64>) -> f64 {
        self.opacity * (-0.5 * (self.whiten * (x - self.center)).norm_squared()).exp()
    }
}

/// Opacity field sampled on a `resolution³` lattice over the scene's bounding cube.
///
/// The cube is split into 16³ blocks. Each block only sums the splats whose
/// 3σ bounding box overlaps it, so every point inside a splat's 3σ ellipsoid
/// sees that splat and pruning only drops contributions below `α·e^{-4.5}`.
#[derive(Clone, Debug)]
pub struct DensityGrid {
    pub origin: [f64; 3],
    pub side: f64,
    pub resolution: usize,
    kernels: Vec<Kernel>,
    blocks: Vec<Vec<u32>>,
    values: Vec<f64>,
}

impl DensityGrid {
    /// Builds block lists and samples every lattice point (in parallel over z-slices).
    pub fn new(scene: &Scene, resolution: usize) -> Result<Self> {
        if scene.is_empty() {
            return Err(Error::InvalidArgument("cannot mesh an empty scene".into()));
        }
        if resolution == 0 || resolution % BLOCKS_PER_AXIS != 0 {
            return Err(Error::InvalidArgument(format!(
                "grid resolution must be a positive multiple of {BLOCKS_PER_AXIS}, got {resolution}"
            )));
        }
        scene.validate()?;
        let kernels: Vec<Kernel> = scene
            .splats
            .iter()
            .map(|s| {
                let r = rotation_matrix(normalize_quat(s.rotation_f64()));
                let inv_s = Matrix3::from_diagonal(&Vector3::from(s.scale().map(|v| 1.0 / v)));
                Kernel {
                    center: s.position_f64(),
                    whiten: inv_s * r.transpose(),
                    opacity: s.opacity(),
                }
            })
            .collect();

        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for s in &scene.splats {
            let reach = 3.0 * s.scale().into_iter().fold(0.0, f64::max);
            let p = s.position_f64();
            for k in 0..3 {
                lo[k] = lo[k].min(p[k] - reach);
                hi[k] = hi[k].max(p[k] + reach);
            }
        }
        let side = 1.1 * (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
        let origin = std::array::from_fn(|k| 0.5 * (lo[k] + hi[k]) - 0.5 * side);

        let mut grid = Self {
            origin,
            side,
            resolution,
            kernels,
            blocks: vec![Vec::new(); BLOCKS_PER_AXIS.pow(3)],
            values: Vec::new(),
        };
        let block_width = side / BLOCKS_PER_AXIS as f64;
        let last = BLOCKS_PER_AXIS as i64 - 1;
        for (i, splat) in scene.splats.iter().enumerate() {
            let cov = covariance_from_rotation_scale(splat.rotation_f64(), splat.scale())?;
            let c = splat.position_f64();
            let range: [(i64, i64); 3] = std::array::from_fn(|a| {
                let reach = 3.0 * cov[(a, a)].sqrt();
                let block = |x: f64| (((x - origin[a]) / block_width).floor() as i64).clamp(0, last);
                (block(c[a] - reach), block(c[a] + reach))
            });
            for bz in range[2].0..=range[2].1 {
                for by in range[1].0..=range[1].1 {
                    for bx in range[0].0..=range[0].1 {
                        let b = (bz as usize * BLOCKS_PER_AXIS + by as usize) * BLOCKS_PER_AXIS + bx as usize;
                        grid.blocks[b].push(i as u32);
                    }
                }
            }
        }

        let n = resolution;
        let per_block = n / BLOCKS_PER_AXIS;
        let slices: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|z| {
                let mut slice = Vec::with_capacity(n * n);
                for y in 0..n {
                    for x in 0..n {
                        let b = grid.block_index([x / per_block, y / per_block, z / per_block]);
                        slice.push(grid.query(&grid.lattice_point([x, y, z]), b));
                    }
                }
                slice
            })
            .collect();
        grid.values = slices.concat();
        Ok(grid)
    }

    /// Lattice spacing.
    pub fn spacing(&self) -> f64 {
        self.side / self.resolution as f64
    }

    /// World position of lattice point `i` (cell-centred within the cube).
    pub fn lattice_point(&self, i: [usize; 3]) -> Vector3<f64> {
        let h = self.spacing();
        Vector3::from(std::array::from_fn(|k| self.origin[k] + (i[k] as f64 + 0.5) * h))
    }

    pub fn block_index(&self, b: [usize; 3]) -> usize {
        (b[2] * BLOCKS_PER_AXIS + b[1]) * BLOCKS_PER_AXIS + b[0]
    }

    /// Block containing `x`, if inside the cube.
    pub fn block_of(&self, x: &Vector3<f64>) -> Option<usize> {
        let w = self.side / BLOCKS_PER_AXIS as f64;
        let mut b = [0; 3];
        for k in 0..3 {
            let f = ((x[k] - self.origin[k]) / w).floor();
            if !(0.0..BLOCKS_PER_AXIS as f64).contains(&f) {
                return None;
            }
            b[k] = f as usize;
        }
        Some(self.block_index(b))
    }

    /// Splats summed for points of block `b`.
    pub fn block_members(&self, b: usize) -> &[u32] {
        &self.blocks[b]
    }

    /// Weighted-opacity sum at `x` over block `b`'s splat list.
    pub fn query(&self, x: &Vector3<f64>, b: usize) -> f64 {
        self.blocks[b].iter().map(|&i| self.kernels[i as usize].eval(x)).sum()
    }

    /// Sum over every splat, without block pruning.
    pub fn query_unpruned(&self, x: &Vector3<f64>) -> f64 {
        self.kernels.iter().map(|k| k.eval(x)).sum()
    }

    /// Sampled values, x fastest.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: [usize; 3]) -> f64 {
        let n = self.resolution;
        self.values[(i[2] * n + i[1]) * n + i[0]]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// `d(x) = Σ αᵢ exp(-½ (x − xᵢ)ᵀ Σᵢ⁻¹ (x − xᵢ))` over the splats of the block containing `x`.
///
/// Points outside the grid's cube have density 0.
pub fn query_density(grid: &DensityGrid, x: [f64; 3]) -> f64 {
    let x = Vector3::from(x);
    grid.block_of(&x).map_or(0.0, |b| grid.query(&x, b))
}
