use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use super::{TriMesh, MIN_TRIANGLE_AREA};

/// Fraction of total area below which a connected component counts as dust.
const DUST_AREA_FRACTION: f64 = 1e-3;
/// Smoothing step of the single Laplacian pass.
const SMOOTH_LAMBDA: f64 = 0.5;
/// Minimum cosine between a face normal before and after a collapse.
const MIN_NORMAL_COSINE: f64 = 0.2;

/// Decimates to at most `target_triangles`, smooths once and removes dust.
pub fn postprocess_mesh(mesh: &TriMesh, target_triangles: usize) -> TriMesh {
    let mut out = if mesh.triangles.len() > target_triangles {
        decimate(mesh, target_triangles)
    } else {
        mesh.clone()
    };
    laplacian_smooth(&mut out, SMOOTH_LAMBDA);
    remove_dust(&out)
}

/// One pass of uniform Laplacian smoothing: `v ← v + λ (mean(neighbours) − v)`.
pub fn laplacian_smooth(mesh: &mut TriMesh, lambda: f64) {
    let n = mesh.vertices.len();
    let mut sum = vec![Vector3::zeros(); n];
    let mut neighbours: Vec<HashSet<u32>> = vec![HashSet::new(); n];
    for tri in &mesh.triangles {
        for k in 0..3 {
            neighbours[tri[k] as usize].insert(tri[(k + 1) % 3]);
            neighbours[tri[(k + 1) % 3] as usize].insert(tri[k]);
        }
    }
    for (v, ns) in neighbours.iter().enumerate() {
        let mut ns: Vec<u32> = ns.iter().copied().collect();
        ns.sort_unstable();
        for &u in &ns {
            sum[v] += mesh.vertex(u);
        }
        if !ns.is_empty() {
            sum[v] /= ns.len() as f64;
        }
    }
    let old = mesh.clone();
    for (v, ns) in neighbours.iter().enumerate() {
        if ns.is_empty() {
            continue;
        }
        let p = old.vertex(v as u32);
        mesh.vertices[v] = (p + lambda * (sum[v] - p)).into();
    }
    // smoothing can flatten a sliver completely; keep the old position there
    for t in 0..mesh.triangles.len() {
        if mesh.face_area(t) <= MIN_TRIANGLE_AREA {
            for &v in &mesh.triangles[t] {
                mesh.vertices[v as usize] = old.vertices[v as usize];
            }
        }
    }
}

/// Removes connected components holding less than 0.1% of the total area.
pub fn remove_dust(mesh: &TriMesh) -> TriMesh {
    let (count, labels) = mesh.triangle_components();
    let mut area = vec![0.0; count];
    for (t, &l) in labels.iter().enumerate() {
        area[l] += mesh.face_area(t);
    }
    let total: f64 = area.iter().sum();
    let mut out = TriMesh {
        vertices: mesh.vertices.clone(),
        triangles: mesh
            .triangles
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| area[l] >= DUST_AREA_FRACTION * total)
            .map(|(t, _)| *t)
            .collect(),
    };
    out.compact();
    out
}

#[derive(Clone, Copy)]
struct Candidate {
    cost: f64,
    a: u32,
    b: u32,
    stamp: (u32, u32),
    target: [f64; 3],
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // min-heap on cost, ties broken by vertex ids for determinism
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| (other.a, other.b).cmp(&(self.a, self.b)))
    }
}

struct Decimator {
    pos: Vec<Vector3<f64>>,
    quadric: Vec<Matrix4<f64>>,
    tris: Vec<[u32; 3]>,
    alive: Vec<bool>,
    faces_of: Vec<Vec<u32>>,
    version: Vec<u32>,
    boundary: Vec<bool>,
}

impl Decimator {
    fn new(mesh: &TriMesh) -> Self {
        let n = mesh.vertices.len();
        let mut d = Self {
            pos: mesh.vertices.iter().map(|&v| Vector3::from(v)).collect(),
            quadric: vec![Matrix4::zeros(); n],
            tris: mesh.triangles.clone(),
            alive: vec![true; mesh.triangles.len()],
            faces_of: vec![Vec::new(); n],
            version: vec![0; n],
            boundary: vec![false; n],
        };
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let cross = mesh.face_cross(t);
            let area = 0.5 * cross.norm();
            if let Some(nrm) = cross.try_normalize(0.0) {
                let p = Vector4::new(nrm.x, nrm.y, nrm.z, -nrm.dot(&mesh.vertex(tri[0])));
                let q = p * p.transpose() * area;
                for &v in tri {
                    d.quadric[v as usize] += q;
                }
            }
            for &v in tri {
                d.faces_of[v as usize].push(t as u32);
            }
        }
        for ((a, b), uses) in mesh.edge_use_counts() {
            if uses != 2 {
                d.boundary[a as usize] = true;
                d.boundary[b as usize] = true;
            }
        }
        d
    }

    fn candidate(&self, a: u32, b: u32) -> Candidate {
        let q = self.quadric[a as usize] + self.quadric[b as usize];
        let cost = |p: &Vector3<f64>| {
            let h = Vector4::new(p.x, p.y, p.z, 1.0);
            (h.transpose() * q * h)[0].max(0.0)
        };
        let (pa, pb) = (self.pos[a as usize], self.pos[b as usize]);
        let mut best = [pa, pb, 0.5 * (pa + pb)]
            .into_iter()
            .map(|p| (cost(&p), p))
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .unwrap();
        let m = Matrix3::new(q[(0, 0)], q[(0, 1)], q[(0, 2)], q[(1, 0)], q[(1, 1)], q[(1, 2)], q[(2, 0)], q[(2, 1)], q[(2, 2)]);
        let rhs = -Vector3::new(q[(0, 3)], q[(1, 3)], q[(2, 3)]);
        let scale = m.norm().max(1e-300);
        if m.determinant().abs() > 1e-9 * scale.powi(3) {
            if let Some(inv) = m.try_inverse() {
                let p = inv * rhs;
                // stay near the edge: an unconstrained optimum can run off on flat regions
                let span = (pb - pa).norm();
                if (p - 0.5 * (pa + pb)).norm() <= 2.0 * span {
                    let c = cost(&p);
                    if c < best.0 {
                        best = (c, p);
                    }
                }
            }
        }
        Candidate {
            cost: best.0,
            a: a.min(b),
            b: a.max(b),
            stamp: (self.version[a.min(b) as usize], self.version[a.max(b) as usize]),
            target: best.1.into(),
        }
    }

    fn neighbours(&self, v: u32) -> HashSet<u32> {
        self.faces_of[v as usize]
            .iter()
            .flat_map(|&t| self.tris[t as usize])
            .filter(|&u| u != v)
            .collect()
    }

    fn face_cross(&self, tri: [u32; 3], moved: u32, at: &Vector3<f64>) -> Vector3<f64> {
        let p = |v: u32| if v == moved { *at } else { self.pos[v as usize] };
        (p(tri[1]) - p(tri[0])).cross(&(p(tri[2]) - p(tri[0])))
    }

    /// Collapses `b` into `a` at `target` if topology and geometry allow it.
    fn try_collapse(&mut self, a: u32, b: u32, target: Vector3<f64>) -> bool {
        if self.boundary[a as usize] || self.boundary[b as usize] {
            return false;
        }
        let shared: Vec<u32> = self.faces_of[a as usize]
            .iter()
            .copied()
            .filter(|t| self.tris[*t as usize].contains(&b))
            .collect();
        if shared.len() != 2 {
            return false;
        }
        let common = self.neighbours(a).intersection(&self.neighbours(b)).count();
        if common != 2 {
            return false;
        }
        // a tetrahedron-like remnant would fold into a double-sided sheet
        if self.faces_of[a as usize].len() + self.faces_of[b as usize].len() <= 8 {
            return false;
        }
        for v in [a, b] {
            for &t in &self.faces_of[v as usize] {
                if shared.contains(&t) {
                    continue;
                }
                let tri = self.tris[t as usize];
                let before = self.face_cross(tri, v, &self.pos[v as usize]);
                let after = self.face_cross(tri, v, &target);
                if 0.5 * after.norm() <= MIN_TRIANGLE_AREA {
                    return false;
                }
                let cos = before.dot(&after) / (before.norm() * after.norm()).max(1e-300);
                if cos < MIN_NORMAL_COSINE {
                    return false;
                }
            }
        }
        for &t in &shared {
            self.alive[t as usize] = false;
        }
        let moved: Vec<u32> = self.faces_of[b as usize]
            .iter()
            .copied()
            .filter(|t| !shared.contains(t))
            .collect();
        for &t in &moved {
            for v in self.tris[t as usize].iter_mut() {
                if *v == b {
                    *v = a;
                }
            }
        }
        let mut faces: Vec<u32> = self.faces_of[a as usize]
            .iter()
            .copied()
            .filter(|t| !shared.contains(t))
            .chain(moved)
            .collect();
        faces.sort_unstable();
        self.faces_of[a as usize] = faces;
        self.faces_of[b as usize].clear();
        for &t in &shared {
            for &v in &self.tris[t as usize] {
                self.faces_of[v as usize].retain(|&f| f != t);
            }
        }
        self.pos[a as usize] = target;
        self.quadric[a as usize] = self.quadric[a as usize] + self.quadric[b as usize];
        self.version[a as usize] += 1;
        self.version[b as usize] += 1;
        true
    }
}

/// Quadric-error edge-collapse decimation to at most `target` triangles.
///
/// Collapses keep the surface manifold (link condition), leave boundary
/// vertices in place and reject moves that flip or flatten a face. If no legal
/// collapse remains the result can stay above `target`.
pub fn decimate(mesh: &TriMesh, target: usize) -> TriMesh {
    let mut d = Decimator::new(mesh);
    let mut heap = BinaryHeap::new();
    let mut edges: Vec<(u32, u32)> = mesh.edge_use_counts().into_keys().collect();
    edges.sort_unstable();
    for (a, b) in edges {
        heap.push(d.candidate(a, b));
    }
    let mut live = mesh.triangles.len();
    while live > target {
        let Some(c) = heap.pop() else { break };
        if c.stamp != (d.version[c.a as usize], d.version[c.b as usize]) {
            continue;
        }
        if !d.try_collapse(c.a, c.b, Vector3::from(c.target)) {
            continue;
        }
        live -= 2;
        let mut ns: Vec<u32> = d.neighbours(c.a).into_iter().collect();
        ns.sort_unstable();
        for u in ns {
            heap.push(d.candidate(c.a, u));
        }
    }
    let mut out = TriMesh {
        vertices: d.pos.iter().map(|p| (*p).into()).collect(),
        triangles: d
            .tris
            .iter()
            .zip(&d.alive)
            .filter(|(_, &alive)| alive)
            .map(|(t, _)| *t)
            .collect(),
    };
    out.compact();
    out
}
