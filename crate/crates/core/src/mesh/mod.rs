//! Gaussian scene to textured triangle mesh.
//!
//! The stages run in order: [`DensityGrid`] samples the block-pruned opacity
//! field, [`extract_surface`] runs marching cubes on it, [`postprocess_mesh`]
//! decimates and cleans up, [`unwrap_uv`] builds a planar-projection atlas,
//! [`backproject_colors`] bakes scene renders into the texture and
//! [`refine_texture`] polishes it under an edit oracle.

mod decimate;
mod density;
mod marching;
mod primitives;
mod raster;
mod tables;
mod texture;
mod uv;

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::Result;
use crate::image::ImageBuffer;
use crate::scene::Scene;

pub use decimate::{laplacian_smooth, postprocess_mesh, remove_dust};
pub use density::{query_density, DensityGrid, BLOCKS_PER_AXIS};
pub use marching::{extract_surface, marching_cubes, SurfaceExtraction};
pub use primitives::{cube, icosphere};
pub use raster::{rasterize, MeshRender, Shading};
pub use texture::{backproject_colors, refine_texture, BackprojectSettings, RefineConfig, RefineOutput};
pub use uv::{unwrap_uv, MAX_CHARTS, UV_GUTTER};

/// Minimum triangle area kept by mesh operations.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Indexed triangle mesh with counter-clockwise (outward) winding.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

/// A mesh with per-vertex UVs and a texture.
///
/// UV `(0, 0)` is the top-left corner of the texture image, `v` grows downwards.
#[derive(Clone, Debug, PartialEq)]
pub struct TexturedMesh {
    pub mesh: TriMesh,
    pub uvs: Vec<[f64; 2]>,
    /// Atlas chart of every triangle.
    pub chart_of: Vec<u32>,
    pub texture: ImageBuffer,
}

/// Mesh and texture settings of the extraction stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub threshold: f64,
    pub resolution: usize,
    pub target_triangles: usize,
    pub texture_size: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            threshold: 1.0,
            resolution: 128,
            target_triangles: 5_000,
            texture_size: 1024,
        }
    }
}

impl TriMesh {
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[u32; 3]>) -> Self {
        Self { vertices, triangles }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Copy with every vertex multiplied by `k`.
    pub fn scaled(&self, k: f64) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| v.map(|c| c * k)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn vertex(&self, i: u32) -> Vector3<f64> {
        Vector3::from(self.vertices[i as usize])
    }

    /// Unnormalised normal (twice the area) of triangle `t`.
    pub fn face_cross(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (self.vertex(a), self.vertex(b), self.vertex(c));
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, t: usize) -> f64 {
        0.5 * self.face_cross(t).norm()
    }

    pub fn face_normal(&self, t: usize) -> Vector3<f64> {
        self.face_cross(t).try_normalize(0.0).unwrap_or_else(Vector3::zeros)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.face_area(t)).sum()
    }

    /// Signed enclosed volume; positive for closed, outward-wound surfaces.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| self.vertex(a).dot(&self.vertex(b).cross(&self.vertex(c))) / 6.0)
            .sum()
    }

    pub fn bounding_box(&self) -> Option<([f64; 3], [f64; 3])> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (
                std::array::from_fn(|k| lo[k].min(v[k])),
                std::array::from_fn(|k| hi[k].max(v[k])),
            )
        }))
    }

    /// Number of triangles using each undirected edge.
    pub fn edge_use_counts(&self) -> HashMap<(u32, u32), usize> {
        let mut counts = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Every edge is shared by exactly two triangles, with opposite directions.
    pub fn is_watertight(&self) -> bool {
        let mut uses: HashMap<(u32, u32), [u32; 2]> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                uses.entry((a.min(b), a.max(b))).or_default()[usize::from(a > b)] += 1;
            }
        }
        !self.triangles.is_empty() && uses.values().all(|&u| u == [1, 1])
    }

    /// Component label per triangle (triangles sharing a vertex are connected).
    pub fn triangle_components(&self) -> (usize, Vec<usize>) {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for tri in &self.triangles {
            let r0 = find(&mut parent, tri[0] as usize);
            for &v in &tri[1..] {
                let r = find(&mut parent, v as usize);
                if r != r0 {
                    parent[r] = r0;
                }
            }
        }
        let mut label_of_root = HashMap::new();
        let labels = self
            .triangles
            .iter()
            .map(|tri| {
                let root = find(&mut parent, tri[0] as usize);
                let next = label_of_root.len();
                *label_of_root.entry(root).or_insert(next)
            })
            .collect();
        (label_of_root.len(), labels)
    }

    pub fn component_count(&self) -> usize {
        self.triangle_components().0
    }

    /// Drops unreferenced vertices, keeping the order of the rest.
    pub fn compact(&mut self) {
        let mut used = vec![false; self.vertices.len()];
        for tri in &self.triangles {
            for &v in tri {
                used[v as usize] = true;
            }
        }
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        for (v, &u) in used.iter().enumerate() {
            if u {
                remap[v] = vertices.len() as u32;
                vertices.push(self.vertices[v]);
            }
        }
        for tri in &mut self.triangles {
            for v in tri.iter_mut() {
                *v = remap[*v as usize];
            }
        }
        self.vertices = vertices;
    }

    /// Indices in range and no triangle below [`MIN_TRIANGLE_AREA`].
    pub fn is_valid(&self) -> bool {
        let n = self.vertices.len() as u32;
        self.triangles.iter().all(|t| t.iter().all(|&v| v < n))
            && (0..self.triangles.len()).all(|t| self.face_area(t) > MIN_TRIANGLE_AREA)
    }
}

impl TexturedMesh {
    /// Triangle `t`'s UV corners.
    pub fn triangle_uvs(&self, t: usize) -> [[f64; 2]; 3] {
        self.mesh.triangles[t].map(|v| self.uvs[v as usize])
    }
}

/// Surface extraction, post-processing, UV atlas and colour back-projection in one call.
///
/// Returns the textured mesh and the extraction warning, if any. An empty
/// iso-surface yields a mesh without triangles.
pub fn extract_textured_mesh(
    scene: &Scene,
    cameras: &[Camera],
    config: &MeshConfig,
) -> Result<(TexturedMesh, Option<String>)> {
    let extraction = extract_surface(scene, config.threshold, config.resolution)?;
    let mesh = postprocess_mesh(&extraction.mesh, config.target_triangles);
    let mut textured = unwrap_uv(&mesh, config.texture_size)?;
    if !textured.mesh.is_empty() {
        textured.texture = backproject_colors(&textured, scene, cameras, &BackprojectSettings::default())?;
    }
    Ok((textured, extraction.warning))
}
