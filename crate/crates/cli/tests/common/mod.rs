//! Fixture files shared by the CLI tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gsedit_cli::imageio::save_png;
use gsedit_core::mesh::TriMesh;
use gsedit_core::scene::{logit, GaussianSplat, Scene};
use gsedit_core::{sh, ImageBuffer};
use rand::Rng;

/// Writes `<stem>.obj` with per-vertex UVs (spherical mapping) and a solid
/// `color` texture referenced through `<stem>.mtl`.
pub fn write_textured_obj(dir: &Path, stem: &str, mesh: &TriMesh, color: [f64; 3]) -> PathBuf {
    let mut obj = format!("mtllib {stem}.mtl\nusemtl skin\n");
    for v in &mesh.vertices {
        writeln!(obj, "v {} {} {}", v[0], v[1], v[2]).unwrap();
    }
    for v in &mesh.vertices {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-12);
        let u = 0.5 + v[2].atan2(v[0]) / (2.0 * std::f64::consts::PI);
        let w = 0.5 + (v[1] / r).asin() / std::f64::consts::PI;
        writeln!(obj, "vt {u} {w}").unwrap();
    }
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| i + 1);
        writeln!(obj, "f {a}/{a} {b}/{b} {c}/{c}").unwrap();
    }
    let path = dir.join(format!("{stem}.obj"));
    fs::write(&path, obj).unwrap();
    fs::write(dir.join(format!("{stem}.mtl")), format!("newmtl skin\nKd 1 1 1\nmap_Kd {stem}_tex.png\n")).unwrap();
    save_png(&ImageBuffer::from_pixel(16, 16, &color), &dir.join(format!("{stem}_tex.png"))).unwrap();
    path
}

/// Writes an OBJ with per-vertex colours (`v x y z r g b`), no material.
pub fn write_vertex_color_obj(dir: &Path, stem: &str, mesh: &TriMesh, color: impl Fn([f64; 3]) -> [f64; 3]) -> PathBuf {
    let mut obj = String::new();
    for v in &mesh.vertices {
        let c = color(*v);
        writeln!(obj, "v {} {} {} {} {} {}", v[0], v[1], v[2], c[0], c[1], c[2]).unwrap();
    }
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| i + 1);
        writeln!(obj, "f {a} {b} {c}").unwrap();
    }
    let path = dir.join(format!("{stem}.obj"));
    fs::write(&path, obj).unwrap();
    path
}

pub fn random_scene(rng: &mut impl Rng, n: usize, sh_degree: usize) -> Scene {
    let k = sh::coeff_count(sh_degree);
    let splats = (0..n)
        .map(|_| {
            let mut s = GaussianSplat {
                position: [0; 3].map(|_| rng.random_range(-1.0f32..1.0)),
                rotation: [0; 4].map(|_| rng.random_range(-1.0f32..1.0)),
                log_scale: [0; 3].map(|_| rng.random_range(-5.0f32..-1.0)),
                opacity_logit: logit(rng.random_range(0.05..0.95)) as f32,
                sh: (0..k).map(|_| [0; 3].map(|_| rng.random_range(-1.0f32..1.0))).collect(),
            };
            s.normalize_rotation();
            s
        })
        .collect();
    Scene::with_splats(splats, sh_degree, [rng.random(), rng.random(), rng.random()])
}
