use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

use super::{TexturedMesh, TriMesh};

/// Upper bound on atlas charts.
pub const MAX_CHARTS: usize = 64;
/// Empty texels between neighbouring charts.
pub const UV_GUTTER: usize = 2;

/// Projection frame of each of the six axis directions: (u axis, v axis) with `u × v` = direction.
const FRAMES: [(usize, usize); 6] = [(1, 2), (2, 0), (0, 1), (2, 1), (0, 2), (1, 0)];

fn axis_label(n: &Vector3<f64>) -> usize {
    let k = (0..3).max_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs())).unwrap();
    if n[k] >= 0.0 {
        k
    } else {
        k + 3
    }
}

fn axis_dir(label: usize) -> Vector3<f64> {
    let mut d = Vector3::zeros();
    d[label % 3] = if label < 3 { 1.0 } else { -1.0 };
    d
}

fn project(label: usize, p: &Vector3<f64>) -> [f64; 2] {
    let (u, v) = FRAMES[label];
    [p[u], p[v]]
}

/// A rectangle to pack: triangles, their 2D coordinates and bounds.
struct Island {
    chart: u32,
    triangles: Vec<usize>,
    coords: HashMap<(usize, u32), [f64; 2]>,
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Island {
    fn new(chart: u32, triangles: Vec<usize>, coords: HashMap<(usize, u32), [f64; 2]>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for c in coords.values() {
            for k in 0..2 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        Self {
            chart,
            triangles,
            coords,
            lo,
            hi,
        }
    }

    fn texels(&self, scale: f64) -> [usize; 2] {
        [0, 1].map(|k| ((self.hi[k] - self.lo[k]) * scale).ceil().max(1.0) as usize)
    }
}

/// Shelf-packs islands at `scale` texels per world unit; `None` if they overflow.
fn shelf_pack(islands: &[Island], order: &[usize], scale: f64, size: usize) -> Option<Vec<[usize; 2]>> {
    let mut origin = vec![[0, 0]; islands.len()];
    let (mut x, mut y, mut shelf) = (UV_GUTTER, UV_GUTTER, 0);
    for &i in order {
        let [w, h] = islands[i].texels(scale);
        if x + w + UV_GUTTER > size {
            x = UV_GUTTER;
            y += shelf + UV_GUTTER;
            shelf = 0;
        }
        if x + w + UV_GUTTER > size || y + h + UV_GUTTER > size {
            return None;
        }
        origin[i] = [x, y];
        x += w + UV_GUTTER;
        shelf = shelf.max(h);
    }
    Some(origin)
}

/// Planar-projection UV atlas.
///
/// Triangles are grouped by dominant normal axis (six directions); each
/// edge-connected group becomes a chart projected orthographically along its
/// axis. The largest 63 charts are kept as they are; any further triangles
/// share one overflow chart where each triangle gets its own cell. Charts
/// are shelf-packed at a common texel density with [`UV_GUTTER`] empty
/// texels between them. Vertices on chart seams are duplicated. The texture
/// starts white.
pub fn unwrap_uv(mesh: &TriMesh, texture_size: usize) -> Result<TexturedMesh> {
    if texture_size < 8 {
        return Err(Error::InvalidArgument(format!("texture size {texture_size} is too small")));
    }
    let nt = mesh.triangles.len();
    let normals: Vec<Vector3<f64>> = (0..nt).map(|t| mesh.face_normal(t)).collect();
    let mut label: Vec<usize> = normals.iter().map(axis_label).collect();

    // edge adjacency
    let mut edge_faces: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            edge_faces.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    let mut adjacent: Vec<Vec<usize>> = vec![Vec::new(); nt];
    let mut keys: Vec<_> = edge_faces.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let faces = &edge_faces[&key];
        for &a in faces {
            for &b in faces {
                if a != b {
                    adjacent[a].push(b);
                }
            }
        }
    }

    // absorb speckles: adopt the majority label of the neighbours when still front-facing to it
    for _ in 0..3 {
        let prev = label.clone();
        for t in 0..nt {
            let mut votes = [0usize; 6];
            for &u in &adjacent[t] {
                votes[prev[u]] += 1;
            }
            let best = (0..6).max_by_key(|&l| (votes[l], usize::from(l == prev[t]))).unwrap();
            if best != prev[t] && votes[best] * 2 > adjacent[t].len() && normals[t].dot(&axis_dir(best)) > 0.3 {
                label[t] = best;
            }
        }
    }

    // charts: edge-connected components of equal label
    let mut chart_id = vec![usize::MAX; nt];
    let mut charts: Vec<Vec<usize>> = Vec::new();
    for seed in 0..nt {
        if chart_id[seed] != usize::MAX {
            continue;
        }
        let id = charts.len();
        let mut members = vec![seed];
        chart_id[seed] = id;
        let mut i = 0;
        while i < members.len() {
            let t = members[i];
            i += 1;
            for &u in &adjacent[t] {
                if chart_id[u] == usize::MAX && label[u] == label[t] {
                    chart_id[u] = id;
                    members.push(u);
                }
            }
        }
        charts.push(members);
    }
    let area = |c: &Vec<usize>| c.iter().map(|&t| mesh.face_area(t)).sum::<f64>();
    let mut by_area: Vec<usize> = (0..charts.len()).collect();
    by_area.sort_by(|&a, &b| area(&charts[b]).total_cmp(&area(&charts[a])).then(a.cmp(&b)));

    let mut islands = Vec::new();
    let keep = if charts.len() > MAX_CHARTS { MAX_CHARTS - 1 } else { charts.len() };
    for (rank, &c) in by_area.iter().enumerate() {
        let l = label[charts[c][0]];
        if rank < keep {
            let mut coords = HashMap::new();
            for &t in &charts[c] {
                for &v in &mesh.triangles[t] {
                    coords.insert((0, v), project(l, &mesh.vertex(v)));
                }
            }
            islands.push(Island::new(rank as u32, charts[c].clone(), coords));
        } else {
            // overflow chart: one cell per triangle, projected onto its own plane
            for &t in &charts[c] {
                let [a, b, cc] = mesh.triangles[t];
                let (pa, pb, pc) = (mesh.vertex(a), mesh.vertex(b), mesh.vertex(cc));
                let e1 = (pb - pa).normalize();
                let e2 = normals[t].cross(&e1);
                let mut coords = HashMap::new();
                for (v, p) in [(a, pa), (b, pb), (cc, pc)] {
                    coords.insert((t + 1, v), [(p - pa).dot(&e1), (p - pa).dot(&e2)]);
                }
                islands.push(Island::new(keep as u32, vec![t], coords));
            }
        }
    }

    // largest common scale that still packs
    let mut order: Vec<usize> = (0..islands.len()).collect();
    let extent = |i: &Island| [i.hi[0] - i.lo[0], i.hi[1] - i.lo[1]];
    order.sort_by(|&a, &b| extent(&islands[b])[1].total_cmp(&extent(&islands[a])[1]).then(a.cmp(&b)));
    let largest = islands.iter().flat_map(extent).fold(0.0, f64::max).max(1e-12);
    let (mut lo, mut hi) = (0.0, texture_size as f64 / largest);
    let mut packed = None;
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        match shelf_pack(&islands, &order, mid, texture_size) {
            Some(p) => {
                lo = mid;
                packed = Some(p);
            }
            None => hi = mid,
        }
    }
    let scale = lo;
    let origins = match packed {
        Some(p) => p,
        None if islands.is_empty() => Vec::new(),
        None => {
            return Err(Error::InvalidArgument(format!(
                "{} triangles do not fit a {texture_size}² atlas",
                nt
            )))
        }
    };

    // split vertices per island
    let size = texture_size as f64;
    let mut out = TriMesh::default();
    let mut uvs = Vec::new();
    let mut triangles = vec![[0u32; 3]; nt];
    let mut chart_of = vec![0u32; nt];
    for (island, origin) in islands.iter().zip(&origins) {
        let mut new_id: HashMap<(usize, u32), u32> = HashMap::new();
        let mut keys: Vec<_> = island.coords.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let c = island.coords[&key];
            new_id.insert(key, out.vertices.len() as u32);
            out.vertices.push(mesh.vertices[key.1 as usize]);
            uvs.push([0, 1].map(|k| (origin[k] as f64 + (c[k] - island.lo[k]) * scale) / size));
        }
        for &t in &island.triangles {
            let tag = island.coords.keys().next().map_or(0, |k| k.0);
            triangles[t] = mesh.triangles[t].map(|v| new_id[&(tag, v)]);
            chart_of[t] = island.chart;
        }
    }
    out.triangles = triangles;
    Ok(TexturedMesh {
        mesh: out,
        uvs,
        chart_of,
        texture: ImageBuffer::filled(texture_size, texture_size, 3, 1.0),
    })
}
