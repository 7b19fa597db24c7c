use std::collections::HashMap;

use crate::error::Result;
use crate::scene::Scene;

use super::density::DensityGrid;
use super::tables::TRI_TABLE;
use super::TriMesh;

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [1, 0, 0],
    [0, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
    [1, 0, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Keeps interpolated vertices off lattice points so no triangle collapses.
const EDGE_T_MARGIN: f64 = 1e-4;

/// Iso-surface `{ f = iso }` of an `n³` scalar lattice, with `point(i)` the
/// world position of lattice index `i` (x fastest in `values`).
///
/// Vertices on shared cell edges are merged, and triangles wind so that their
/// normals point towards lower values.
pub fn marching_cubes(
    values: &[f64],
    n: usize,
    iso: f64,
    point: impl Fn([usize; 3]) -> [f64; 3],
) -> TriMesh {
    let at = |i: [usize; 3]| values[(i[2] * n + i[1]) * n + i[0]];
    let mut mesh = TriMesh::default();
    let mut edge_vertex: HashMap<([usize; 3], usize), u32> = HashMap::new();
    for z in 0..n.saturating_sub(1) {
        for y in 0..n - 1 {
            for x in 0..n - 1 {
                let corner = |c: usize| [x + CORNERS[c][0], y + CORNERS[c][1], z + CORNERS[c][2]];
                let vals: [f64; 8] = std::array::from_fn(|c| at(corner(c)));
                let case = (0..8).fold(0usize, |acc, c| acc | (usize::from(vals[c] < iso) << c));
                if case == 0 || case == 255 {
                    continue;
                }
                let row = &TRI_TABLE[case];
                let mut ids = [0u32; 3];
                for (k, &e) in row.iter().take_while(|&&e| e >= 0).enumerate() {
                    let [a, b] = EDGES[e as usize];
                    let (pa, pb) = (corner(a), corner(b));
                    let (lo, axis) = if pa < pb { (pa, axis_of(pa, pb)) } else { (pb, axis_of(pa, pb)) };
                    let id = *edge_vertex.entry((lo, axis)).or_insert_with(|| {
                        let (va, vb) = (vals[a], vals[b]);
                        let t = ((iso - va) / (vb - va)).clamp(EDGE_T_MARGIN, 1.0 - EDGE_T_MARGIN);
                        let (wa, wb) = (point(pa), point(pb));
                        mesh.vertices.push(std::array::from_fn(|j| wa[j] + t * (wb[j] - wa[j])));
                        mesh.vertices.len() as u32 - 1
                    });
                    ids[k % 3] = id;
                    if k % 3 == 2 {
                        // the table winds towards higher values; flip to face outwards
                        mesh.triangles.push([ids[0], ids[2], ids[1]]);
                    }
                }
            }
        }
    }
    mesh
}

fn axis_of(a: [usize; 3], b: [usize; 3]) -> usize {
    (0..3).find(|&k| a[k] != b[k]).unwrap_or(0)
}

/// Result of [`extract_surface`].
#[derive(Clone, Debug)]
pub struct SurfaceExtraction {
    pub mesh: TriMesh,
    pub grid: DensityGrid,
    /// Set when the iso-surface is empty.
    pub warning: Option<String>,
}

/// Marching cubes over the scene's block-pruned density at `threshold`.
pub fn extract_surface(scene: &Scene, threshold: f64, resolution: usize) -> Result<SurfaceExtraction> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(crate::Error::InvalidArgument(format!("threshold must be positive, got {threshold}")));
    }
    let grid = DensityGrid::new(scene, resolution)?;
    let mesh = marching_cubes(grid.values(), resolution, threshold, |i| grid.lattice_point(i).into());
    let warning = mesh.is_empty().then(|| {
        let msg = format!(
            "iso-surface at threshold {threshold} is empty (max density {:.4})",
            grid.max_value()
        );
        log::warn!("{msg}");
        msg
    });
    Ok(SurfaceExtraction { mesh, grid, warning })
}
