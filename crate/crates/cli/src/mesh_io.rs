//! OBJ/MTL/PNG meshes: loading input meshes, rendering them from a rig, and
//! writing textured results.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gsedit_core::mesh::{rasterize, Shading, TexturedMesh, TriMesh};
use gsedit_core::{Camera, CameraRig, ImageBuffer};
use thiserror::Error;

use crate::imageio::{load_rgb, save_png};

#[derive(Debug, Error)]
pub enum MeshIoError {
    #[error("{path}: {source}")]
    Obj { path: PathBuf, source: tobj::LoadError },
    #[error("{path}: {source}")]
    Texture { path: PathBuf, source: image::ImageError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

/// Surface colour of a loaded mesh.
#[derive(Clone, Debug)]
pub enum MeshColors {
    Texture { uvs: Vec<[f64; 2]>, texture: ImageBuffer },
    Vertex(Vec<[f64; 3]>),
    Flat([f64; 3]),
}

#[derive(Clone, Debug)]
pub struct LoadedMesh {
    pub mesh: TriMesh,
    pub colors: MeshColors,
}

/// Fallback colour for meshes without texture, vertex colours or material colour.
const DEFAULT_GRAY: [f64; 3] = [0.7; 3];

/// Loads a triangulated OBJ, merging all of its objects.
///
/// Colour source, by priority: UVs plus a `map_Kd` texture, per-vertex colours
/// (`v x y z r g b`), the material's `Kd`. OBJ texture coordinates have `v`
/// pointing up; they are flipped to image rows here.
pub fn load_obj(path: &Path) -> Result<LoadedMesh, MeshIoError> {
    let obj_err = |source| MeshIoError::Obj {
        path: path.to_owned(),
        source,
    };
    let (models, materials) = tobj::load_obj(
        path,
        &tobj::LoadOptions {
            single_index: true,
            triangulate: true,
            ..Default::default()
        },
    )
    .map_err(obj_err)?;
    let materials = materials.unwrap_or_else(|e| {
        log::warn!("{}: materials not loaded: {e}", path.display());
        Vec::new()
    });

    let mut mesh = TriMesh::default();
    let mut uvs = Vec::new();
    let mut vcolors = Vec::new();
    let mut all_uvs = true;
    let mut all_colors = true;
    let mut texture_file: Option<String> = None;
    let mut flat: Option<[f64; 3]> = None;
    for m in &models {
        let mm = &m.mesh;
        let base = mesh.vertices.len() as u32;
        let n = mm.positions.len() / 3;
        mesh.vertices
            .extend(mm.positions.chunks_exact(3).map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]));
        mesh.triangles
            .extend(mm.indices.chunks_exact(3).map(|t| [base + t[0], base + t[1], base + t[2]]));
        if mm.texcoords.len() == 2 * n {
            uvs.extend(mm.texcoords.chunks_exact(2).map(|t| [t[0] as f64, 1.0 - t[1] as f64]));
        } else {
            all_uvs = false;
        }
        if mm.vertex_color.len() == 3 * n {
            vcolors.extend(mm.vertex_color.chunks_exact(3).map(|c| [c[0] as f64, c[1] as f64, c[2] as f64]));
        } else {
            all_colors = false;
        }
        if let Some(mat) = mm.material_id.and_then(|i| materials.get(i)) {
            if let Some(tex) = mat.diffuse_texture.as_ref().filter(|t| !t.is_empty()) {
                if texture_file.as_ref().is_some_and(|t| t != tex) {
                    log::warn!("{}: several textures; using {}", path.display(), texture_file.as_ref().unwrap());
                } else {
                    texture_file = Some(tex.clone());
                }
            }
            if let Some(kd) = mat.diffuse {
                flat.get_or_insert(kd.map(f64::from));
            }
        }
    }
    if mesh.triangles.is_empty() {
        return Err(MeshIoError::Invalid(format!("{}: no faces", path.display())));
    }
    let colors = match texture_file {
        Some(tex) if all_uvs => {
            let tex_path = path.parent().unwrap_or(Path::new(".")).join(tex);
            let texture = load_rgb(&tex_path).map_err(|source| MeshIoError::Texture {
                path: tex_path.clone(),
                source,
            })?;
            MeshColors::Texture { uvs, texture }
        }
        _ if all_colors => MeshColors::Vertex(vcolors),
        _ => MeshColors::Flat(flat.unwrap_or(DEFAULT_GRAY)),
    };
    Ok(LoadedMesh { mesh, colors })
}

/// Translates the bounding-box centre to the origin and scales the farthest
/// vertex to distance 1.
pub fn normalize_to_unit_sphere(mesh: &TriMesh) -> TriMesh {
    let Some((lo, hi)) = mesh.bounding_box() else {
        return mesh.clone();
    };
    let c: [f64; 3] = std::array::from_fn(|k| 0.5 * (lo[k] + hi[k]));
    let r = mesh
        .vertices
        .iter()
        .map(|v| (0..3).map(|k| (v[k] - c[k]).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let s = if r > 0.0 { 1.0 / r } else { 1.0 };
    TriMesh::new(
        mesh.vertices.iter().map(|v| std::array::from_fn(|k| (v[k] - c[k]) * s)).collect(),
        mesh.triangles.clone(),
    )
}

/// Renders the normalised mesh from every rig camera on a white background.
pub fn render_views(input: &LoadedMesh, rig: &CameraRig) -> Vec<(Camera, ImageBuffer)> {
    let mesh = normalize_to_unit_sphere(&input.mesh);
    rig.iter()
        .map(|cam| {
            let shading = match &input.colors {
                MeshColors::Texture { uvs, texture } => Shading::Texture { uvs, texture },
                MeshColors::Vertex(c) => Shading::VertexColors(c),
                MeshColors::Flat(c) => Shading::Flat(*c),
            };
            (cam.clone(), rasterize(&mesh, shading, cam, [1.0; 3]).image.rgb())
        })
        .collect()
}

/// Ground-truth views of an OBJ mesh for reconstruction.
pub fn load_mesh_input(path: &Path, rig: &CameraRig) -> Result<Vec<(Camera, ImageBuffer)>, MeshIoError> {
    Ok(render_views(&load_obj(path)?, rig))
}

/// Loads a textured OBJ as written by [`save_textured_obj`], for refinement.
pub fn load_textured_obj(path: &Path) -> Result<TexturedMesh, MeshIoError> {
    let loaded = load_obj(path)?;
    let MeshColors::Texture { uvs, texture } = loaded.colors else {
        return Err(MeshIoError::Invalid(format!(
            "{}: texture refinement needs UVs and a map_Kd texture",
            path.display()
        )));
    };
    let chart_of = vec![0; loaded.mesh.triangles.len()];
    Ok(TexturedMesh {
        mesh: loaded.mesh,
        uvs,
        chart_of,
        texture,
    })
}

/// Writes `<stem>.obj`, `<stem>.mtl` and `<stem>.png` into `dir`; returns the OBJ path.
pub fn save_textured_obj(tm: &TexturedMesh, dir: &Path, stem: &str) -> Result<PathBuf, MeshIoError> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| MeshIoError::Io { path, source }
    };
    let obj_path = dir.join(format!("{stem}.obj"));
    let mtl_path = dir.join(format!("{stem}.mtl"));
    let png_path = dir.join(format!("{stem}.png"));

    let mut obj = String::new();
    writeln!(obj, "mtllib {stem}.mtl").unwrap();
    writeln!(obj, "usemtl {stem}").unwrap();
    for v in &tm.mesh.vertices {
        writeln!(obj, "v {} {} {}", v[0], v[1], v[2]).unwrap();
    }
    for uv in &tm.uvs {
        writeln!(obj, "vt {} {}", uv[0], 1.0 - uv[1]).unwrap();
    }
    for t in &tm.mesh.triangles {
        let [a, b, c] = t.map(|i| i + 1);
        writeln!(obj, "f {a}/{a} {b}/{b} {c}/{c}").unwrap();
    }
    fs::write(&obj_path, obj).map_err(io(&obj_path))?;
    let mtl = format!("newmtl {stem}\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd {stem}.png\n");
    fs::write(&mtl_path, mtl).map_err(io(&mtl_path))?;
    save_png(&tm.texture, &png_path).map_err(|source| MeshIoError::Texture {
        path: png_path.clone(),
        source,
    })?;
    Ok(obj_path)
}
