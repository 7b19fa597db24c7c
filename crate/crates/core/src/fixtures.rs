//! Analytic scenes with known ground truth.

use nalgebra::Vector3;

use crate::camera::Camera;
use crate::image::ImageBuffer;
use crate::scene::{GaussianSplat, Scene};

/// A flat-shaded sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
    pub color: [f64; 3],
}

/// Red, green and blue spheres packed inside the unit sphere.
pub fn three_spheres() -> Vec<Sphere> {
    vec![
        Sphere {
            center: [-0.42, -0.15, 0.1],
            radius: 0.33,
            color: [0.85, 0.2, 0.15],
        },
        Sphere {
            center: [0.42, -0.15, -0.1],
            radius: 0.33,
            color: [0.2, 0.75, 0.25],
        },
        Sphere {
            center: [0.0, 0.35, 0.0],
            radius: 0.3,
            color: [0.2, 0.3, 0.85],
        },
    ]
}

fn ray_hit(origin: &Vector3<f64>, dir: &Vector3<f64>, s: &Sphere) -> Option<f64> {
    let oc = origin - Vector3::from(s.center);
    let b = oc.dot(dir);
    let c = oc.norm_squared() - s.radius * s.radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > 0.0).then_some(t)
}

/// Ray-traced RGBA render of flat spheres with `samples × samples` supersampling
/// per pixel; alpha is the covered fraction.
pub fn render_spheres(spheres: &[Sphere], camera: &Camera, background: [f64; 3], samples: usize) -> ImageBuffer {
    let (w, h) = (camera.width, camera.height);
    let f = camera.focal();
    let (cx, cy) = camera.principal_point();
    let rt = camera.rotation().transpose();
    let origin = camera.position();
    let n = samples.max(1);
    let mut img = ImageBuffer::new(w, h, 4);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            let mut hits = 0usize;
            for sy in 0..n {
                for sx in 0..n {
                    let u = x as f64 + (sx as f64 + 0.5) / n as f64;
                    let v = y as f64 + (sy as f64 + 0.5) / n as f64;
                    let dir = (rt * Vector3::new((u - cx) / f, (v - cy) / f, 1.0)).normalize();
                    let hit = spheres
                        .iter()
                        .filter_map(|s| ray_hit(&origin, &dir, s).map(|t| (t, s)))
                        .min_by(|a, b| a.0.total_cmp(&b.0));
                    let c = match hit {
                        Some((_, s)) => {
                            hits += 1;
                            s.color
                        }
                        None => background,
                    };
                    for ch in 0..3 {
                        acc[ch] += c[ch];
                    }
                }
            }
            let total = (n * n) as f64;
            let px = img.pixel_mut(x, y);
            for ch in 0..3 {
                px[ch] = acc[ch] / total;
            }
            px[3] = hits as f64 / total;
        }
    }
    img
}

/// Points on a sphere in a deterministic Fibonacci spiral.
pub fn fibonacci_sphere(n: usize, radius: f64) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let th = golden * i as f64;
            [radius * r * th.cos(), radius * y, radius * r * th.sin()]
        })
        .collect()
}

/// Shell of isotropic splats covering a sphere, coloured per position.
pub fn splat_sphere(n: usize, radius: f64, color: impl Fn([f64; 3]) -> [f64; 3]) -> Scene {
    let pts = fibonacci_sphere(n, radius);
    let spacing = radius * (4.0 * std::f64::consts::PI / n as f64).sqrt();
    let splats = pts
        .iter()
        .map(|&p| GaussianSplat::isotropic(p, 0.8 * spacing, 0.95, color(p)))
        .collect();
    Scene::with_splats(splats, 0, [1.0, 1.0, 1.0])
}

/// Mid-gray sphere of radius 0.5 on a white background.
pub fn gray_sphere() -> Scene {
    splat_sphere(1500, 0.5, |_| [0.5, 0.5, 0.5])
}
