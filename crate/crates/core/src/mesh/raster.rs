use nalgebra::Vector3;

use crate::camera::Camera;
use crate::image::ImageBuffer;

use super::TriMesh;

const NEAR: f64 = 0.01;

/// Surface colour source for [`rasterize`].
#[derive(Clone, Copy, Debug)]
pub enum Shading<'a> {
    /// Per-vertex UVs with nearest-texel lookup.
    Texture {
        uvs: &'a [[f64; 2]],
        texture: &'a ImageBuffer,
    },
    /// Per-vertex colours, perspective-correct interpolation.
    VertexColors(&'a [[f64; 3]]),
    Flat([f64; 3]),
}

/// Output of the mesh rasterizer.
#[derive(Clone, Debug)]
pub struct MeshRender {
    /// RGBA; uncovered pixels hold the background with alpha 0.
    pub image: ImageBuffer,
    /// Camera depth per pixel, infinite where uncovered.
    pub depth: Vec<f64>,
    /// Texel index (`y · width + x`) sampled by each covered pixel in texture mode.
    pub texel: Vec<Option<u32>>,
}

/// Nearest texel under UV `uv` for a `w × h` texture.
pub(crate) fn texel_at(uv: [f64; 2], w: usize, h: usize) -> (usize, usize) {
    let x = ((uv[0] * w as f64).floor().max(0.0) as usize).min(w - 1);
    let y = ((uv[1] * h as f64).floor().max(0.0) as usize).min(h - 1);
    (x, y)
}

/// Z-buffered triangle rasterizer sampling pixel centers.
///
/// Triangles with a vertex behind the near plane are skipped; both windings
/// are drawn. Equal depths keep the earlier triangle.
pub fn rasterize(mesh: &TriMesh, shading: Shading<'_>, camera: &Camera, background: [f64; 3]) -> MeshRender {
    let (w, h) = (camera.width, camera.height);
    let mut image = ImageBuffer::new(w, h, 4);
    for p in image.data_mut().chunks_mut(4) {
        p[..3].copy_from_slice(&background);
    }
    let mut depth = vec![f64::INFINITY; w * h];
    let mut texel = vec![None; w * h];
    for tri in &mesh.triangles {
        let Some(s) = tri
            .iter()
            .map(|&v| camera.project(&Vector3::from(mesh.vertices[v as usize]), NEAR))
            .collect::<Option<Vec<_>>>()
        else {
            continue;
        };
        let area = (s[1].0 - s[0].0) * (s[2].1 - s[0].1) - (s[2].0 - s[0].0) * (s[1].1 - s[0].1);
        if area.abs() < 1e-12 {
            continue;
        }
        let x0 = s.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let x1 = (s.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil().max(0.0) as usize).min(w);
        let y0 = s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let y1 = (s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil().max(0.0) as usize).min(h);
        for py in y0..y1 {
            for px in x0..x1 {
                let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
                let edge = |a: usize, b: usize| (s[b].0 - s[a].0) * (cy - s[a].1) - (cx - s[a].0) * (s[b].1 - s[a].1);
                let b = [edge(1, 2) / area, edge(2, 0) / area, edge(0, 1) / area];
                if b.iter().any(|&v| v < 0.0) {
                    continue;
                }
                let inv = [b[0] / s[0].2, b[1] / s[1].2, b[2] / s[2].2];
                let z = 1.0 / (inv[0] + inv[1] + inv[2]);
                let i = py * w + px;
                if z >= depth[i] {
                    continue;
                }
                depth[i] = z;
                let wts = inv.map(|v| v * z);
                let rgb = match shading {
                    Shading::Texture { uvs, texture } => {
                        let uv: [f64; 2] = std::array::from_fn(|k| (0..3).map(|j| wts[j] * uvs[tri[j] as usize][k]).sum());
                        let (tx, ty) = texel_at(uv, texture.width(), texture.height());
                        texel[i] = Some((ty * texture.width() + tx) as u32);
                        let p = texture.pixel(tx, ty);
                        [p[0], p[1], p[2]]
                    }
                    Shading::VertexColors(colors) => {
                        std::array::from_fn(|k| (0..3).map(|j| wts[j] * colors[tri[j] as usize][k]).sum())
                    }
                    Shading::Flat(c) => c,
                };
                let p = image.pixel_mut(px, py);
                p[..3].copy_from_slice(&rgb);
                p[3] = 1.0;
            }
        }
    }
    MeshRender { image, depth, texel }
}
