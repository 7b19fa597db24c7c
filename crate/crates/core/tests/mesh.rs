mod support;

use gsedit_core::edit::{IdentityOracle, ProceduralEdit, ProceduralOracle};
use gsedit_core::fixtures::{gray_sphere, splat_sphere};
use gsedit_core::mesh::*;
use gsedit_core::render::render;
use gsedit_core::scene::{covariance_from_rotation_scale, GaussianSplat, Scene};
use gsedit_core::{Camera, ImageBuffer, RigSettings};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opaque_splat(center: [f64; 3], sigma: f64) -> GaussianSplat {
    let mut s = GaussianSplat::isotropic(center, sigma, 0.5, [0.5; 3]);
    // sigmoid(40) rounds to exactly 1
    s.opacity_logit = 40.0;
    s
}

fn scene_of(splats: Vec<GaussianSplat>) -> Scene {
    Scene::with_splats(splats, 0, [1.0; 3])
}

/// Direct evaluation of α exp(-½ dᵀ Σ⁻¹ d) through an explicit matrix inverse.
fn density_oracle(scene: &Scene, x: [f64; 3]) -> f64 {
    scene
        .splats
        .iter()
        .map(|s| {
            let cov = covariance_from_rotation_scale(s.rotation_f64(), s.scale()).unwrap();
            let d = Vector3::from(x) - s.position_f64();
            s.opacity() * (-0.5 * (d.transpose() * cov.try_inverse().unwrap() * d)[0]).exp()
        })
        .sum()
}

#[test]
fn density_at_a_lone_splat_center_is_its_opacity() {
    let s = GaussianSplat::isotropic([0.1, -0.2, 0.3], 0.1, 0.7, [0.5; 3]);
    let grid = DensityGrid::new(&scene_of(vec![s.clone()]), 128).unwrap();
    let d = query_density(&grid, [s.position[0], s.position[1], s.position[2]].map(f64::from));
    assert_eq!(d, s.opacity());
    assert!((d - 0.7).abs() < 1e-7);
}

#[test]
fn block_far_from_every_splat_has_zero_density() {
    let scene = scene_of(vec![
        GaussianSplat::isotropic([-1.0, -1.0, -1.0], 0.02, 0.9, [0.5; 3]),
        GaussianSplat::isotropic([1.0, 1.0, 1.0], 0.02, 0.9, [0.5; 3]),
    ]);
    let grid = DensityGrid::new(&scene, 32).unwrap();
    let b = grid.block_of(&Vector3::zeros()).unwrap();
    assert!(grid.block_members(b).is_empty());
    assert_eq!(query_density(&grid, [0.0; 3]), 0.0);
}

#[test]
fn two_identical_half_opaque_splats_sum_to_one() {
    let s = GaussianSplat::isotropic([0.0; 3], 0.1, 0.5, [0.5; 3]);
    let grid = DensityGrid::new(&scene_of(vec![s.clone(), s]), 16).unwrap();
    assert_eq!(query_density(&grid, [0.0; 3]), 1.0);
}

#[test]
fn density_matches_the_explicit_inverse_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scene = support::random_scene(&mut rng, 12, 0, 0.3);
    let grid = DensityGrid::new(&scene, 16).unwrap();
    for _ in 0..200 {
        let x: [f64; 3] = [0; 3].map(|_| rng.random_range(-0.4..0.4));
        let exact = density_oracle(&scene, x);
        let unpruned = grid.query_unpruned(&Vector3::from(x));
        assert!((unpruned - exact).abs() <= 1e-12 * exact.max(1e-300), "{unpruned} vs {exact}");
    }
}

#[test]
fn block_pruning_error_is_bounded_for_compact_splats() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut splats = Vec::new();
    for _ in 0..300 {
        let p: [f64; 3] = [0; 3].map(|_| rng.random_range(-0.5..0.5));
        splats.push(GaussianSplat::isotropic(p, rng.random_range(0.01..0.02), rng.random_range(0.3..0.9), [0.5; 3]));
    }
    let scene = scene_of(splats);
    let grid = DensityGrid::new(&scene, 128).unwrap();
    let block_width = grid.side / BLOCKS_PER_AXIS as f64;
    assert!(scene.splats.iter().all(|s| 3.0 * s.scale()[0] <= block_width));
    let kept: usize = (0..BLOCKS_PER_AXIS.pow(3)).map(|b| grid.block_members(b).len()).sum();
    assert!(kept < 27 * scene.len(), "block lists should prune");
    let mut worst: f64 = 0.0;
    for z in (0..128).step_by(3) {
        for y in (0..128).step_by(3) {
            for x in 0..128 {
                let full = grid.query_unpruned(&grid.lattice_point([x, y, z]));
                let pruned = grid.value([x, y, z]);
                assert!(pruned <= full + 1e-12);
                if full >= 0.1 {
                    worst = worst.max((full - pruned) / full);
                }
            }
        }
    }
    assert!(worst <= 0.05, "worst relative error {worst}");
}

#[test]
fn lone_opaque_splat_yields_the_analytic_sphere() {
    let sigma = 0.2;
    let scene = scene_of(vec![opaque_splat([0.0; 3], sigma)]);
    let out = extract_surface(&scene, 0.5, 128).unwrap();
    assert!(out.warning.is_none());
    let r = sigma * (2.0 * 2f64.ln()).sqrt();
    assert!(out.mesh.is_watertight());
    assert!(out.mesh.is_valid());
    assert_eq!(out.mesh.component_count(), 1);
    for v in &out.mesh.vertices {
        let rv = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        assert!((rv - r).abs() <= 0.03 * r, "vertex radius {rv}, expected {r}");
    }
    assert!(out.mesh.signed_volume() > 0.0);
}

#[test]
fn threshold_above_the_peak_gives_an_empty_mesh_and_a_warning() {
    let scene = scene_of(vec![GaussianSplat::isotropic([0.0; 3], 0.2, 0.6, [0.5; 3])]);
    let out = extract_surface(&scene, 0.7, 32).unwrap();
    assert!(out.mesh.is_empty());
    assert!(out.warning.is_some());
}

#[test]
fn two_separated_splats_give_two_closed_components() {
    let scene = scene_of(vec![opaque_splat([-0.5, 0.0, 0.0], 0.1), opaque_splat([0.5, 0.0, 0.0], 0.1)]);
    let out = extract_surface(&scene, 0.5, 64).unwrap();
    assert_eq!(out.mesh.component_count(), 2);
    assert!(out.mesh.is_watertight());
}

#[test]
fn bad_extraction_arguments_are_rejected() {
    let scene = scene_of(vec![opaque_splat([0.0; 3], 0.1)]);
    assert!(extract_surface(&scene, 0.0, 64).is_err());
    assert!(extract_surface(&scene, 0.5, 100).is_err());
    assert!(extract_surface(&Scene::new(0, [1.0; 3]), 0.5, 64).is_err());
}

/// Closest distance from `p` to triangle `abc` (Ericson's region test).
fn point_triangle_distance(p: Vector3<f64>, a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>) -> f64 {
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return (p - a).norm();
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= 0.0 && d4 <= d3 {
        return (p - b).norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return (p - (a + ab * (d1 / (d1 - d3)))).norm();
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= 0.0 && d5 <= d6 {
        return (p - c).norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return (p - (a + ac * (d2 / (d2 - d6)))).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm()
}

fn surface_samples(m: &TriMesh, per_triangle: usize, rng: &mut impl Rng) -> Vec<Vector3<f64>> {
    let mut pts = Vec::new();
    for tri in &m.triangles {
        let [a, b, c] = tri.map(|v| m.vertex(v));
        pts.extend([a, b, c]);
        for _ in 0..per_triangle {
            let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
            if u + v > 1.0 {
                (u, v) = (1.0 - u, 1.0 - v);
            }
            pts.push(a + (b - a) * u + (c - a) * v);
        }
    }
    pts
}

fn one_sided_hausdorff(from: &[Vector3<f64>], to: &TriMesh) -> f64 {
    from.iter()
        .map(|&p| {
            to.triangles
                .iter()
                .map(|t| {
                    let [a, b, c] = t.map(|v| to.vertex(v));
                    point_triangle_distance(p, a, b, c)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[test]
fn decimated_icosphere_stays_within_one_percent_hausdorff() {
    let input = icosphere(4);
    assert_eq!(input.triangles.len(), 5120);
    let out = postprocess_mesh(&input, 1280);
    assert!(out.triangles.len() <= 1280, "{}", out.triangles.len());
    assert!(out.is_watertight());
    let (lo, hi) = input.bounding_box().unwrap();
    let diag = (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = one_sided_hausdorff(&surface_samples(&out, 1, &mut rng), &input)
        .max(one_sided_hausdorff(&surface_samples(&input, 0, &mut rng), &out));
    assert!(h <= 0.01 * diag, "hausdorff {h} vs diagonal {diag}");
}

#[test]
fn dust_component_is_removed() {
    let mut m = icosphere(3);
    // pentagonal bipyramid: a closed 10-triangle speck far away
    let base = m.vertices.len() as u32;
    let tau = std::f64::consts::TAU;
    for k in 0..5 {
        let a = tau * k as f64 / 5.0;
        m.vertices.push([3.0 + 0.01 * a.cos(), 0.01 * a.sin(), 0.0]);
    }
    m.vertices.push([3.0, 0.0, 0.01]);
    m.vertices.push([3.0, 0.0, -0.01]);
    for k in 0..5u32 {
        let (a, b) = (base + k, base + (k + 1) % 5);
        m.triangles.push([a, b, base + 5]);
        m.triangles.push([b, a, base + 6]);
    }
    assert_eq!(m.component_count(), 2);
    let out = postprocess_mesh(&m, 100_000);
    assert_eq!(out.component_count(), 1);
    assert_eq!(out.triangles.len(), 1280);
    assert!(out.vertices.iter().all(|v| v[0] < 2.0));
}

#[test]
fn single_triangle_is_one_affine_chart() {
    let m = TriMesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]], vec![[0, 1, 2]]);
    let tm = unwrap_uv(&m, 64).unwrap();
    assert_eq!(tm.chart_of, vec![0]);
    let uv = tm.triangle_uvs(0);
    // the map from positions to UVs is affine: edge vectors scale uniformly
    let e1 = [uv[1][0] - uv[0][0], uv[1][1] - uv[0][1]];
    let e2 = [uv[2][0] - uv[0][0], uv[2][1] - uv[0][1]];
    let s1 = (e1[0].powi(2) + e1[1].powi(2)).sqrt();
    let s2 = (e2[0].powi(2) + e2[1].powi(2)).sqrt();
    assert!((s2 / s1 - 2.0).abs() < 1e-9);
    assert!((e1[0] * e2[0] + e1[1] * e2[1]).abs() < 1e-12);
    // the chart fills the packed square up to the gutters
    let used = e1[0].abs().max(e2[0].abs()).max(e1[1].abs()).max(e2[1].abs());
    assert!(used * 64.0 >= 64.0 - 2.0 * UV_GUTTER as f64 - 1.0);
    assert!(uv.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
}

/// Texels touched by each chart, sampled densely inside every UV triangle.
fn chart_occupancy(tm: &TexturedMesh) -> Vec<Option<u32>> {
    let size = tm.texture.width();
    let mut owner: Vec<Option<u32>> = vec![None; size * size];
    let mut clash = false;
    for t in 0..tm.mesh.triangles.len() {
        let uv = tm.triangle_uvs(t);
        let n = 64;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
                let p: [f64; 2] = std::array::from_fn(|k| uv[0][k] + a * (uv[1][k] - uv[0][k]) + b * (uv[2][k] - uv[0][k]));
                let x = ((p[0] * size as f64) as usize).min(size - 1);
                let y = ((p[1] * size as f64) as usize).min(size - 1);
                match owner[y * size + x] {
                    Some(c) if c != tm.chart_of[t] => clash = true,
                    _ => owner[y * size + x] = Some(tm.chart_of[t]),
                }
            }
        }
    }
    assert!(!clash, "two charts share a texel");
    owner
}

#[test]
fn cube_atlas_has_six_disjoint_charts() {
    let tm = unwrap_uv(&cube(0.5), 128).unwrap();
    let charts: std::collections::BTreeSet<u32> = tm.chart_of.iter().copied().collect();
    assert!(charts.len() <= 6);
    chart_occupancy(&tm);
}

#[test]
fn icosphere_atlas_stays_in_the_unit_square() {
    let tm = unwrap_uv(&icosphere(3), 256).unwrap();
    let charts: std::collections::BTreeSet<u32> = tm.chart_of.iter().copied().collect();
    assert!(charts.len() <= MAX_CHARTS);
    assert!(tm.uvs.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
    chart_occupancy(&tm);
    assert!(tm.mesh.is_valid());
}

#[test]
fn chart_count_is_capped_on_fragmented_meshes() {
    // many tiny disconnected tetrahedra: far more islands than charts
    let mut m = TriMesh::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..60 {
        let c: [f64; 3] = [0; 3].map(|_| rng.random_range(-1.0..1.0));
        let base = m.vertices.len() as u32;
        for d in [[0.0, 0.0, 0.0], [0.05, 0.0, 0.0], [0.0, 0.05, 0.0], [0.0, 0.0, 0.05]] {
            m.vertices.push(std::array::from_fn(|k| c[k] + d[k]));
        }
        for t in [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]] {
            m.triangles.push(t.map(|v| base + v));
        }
    }
    let tm = unwrap_uv(&m, 512).unwrap();
    let charts: std::collections::BTreeSet<u32> = tm.chart_of.iter().copied().collect();
    assert_eq!(charts.len(), MAX_CHARTS);
    chart_occupancy(&tm);
}

fn small_rig(size: usize) -> Vec<Camera> {
    RigSettings {
        width: size,
        height: size,
        ..RigSettings::default()
    }
    .build()
    .unwrap()
    .cameras
}

fn small_config() -> MeshConfig {
    MeshConfig {
        threshold: 1.0,
        resolution: 64,
        target_triangles: 3_000,
        texture_size: 256,
    }
}

#[test]
fn uniformly_red_scene_bakes_a_red_texture() {
    let scene = splat_sphere(800, 0.5, |_| [1.0, 0.0, 0.0]);
    let (tm, warning) = extract_textured_mesh(&scene, &small_rig(64), &small_config()).unwrap();
    assert!(warning.is_none());
    for t in 0..tm.mesh.triangles.len() {
        let uv = tm.triangle_uvs(t);
        let c: [f64; 2] = std::array::from_fn(|k| (uv[0][k] + uv[1][k] + uv[2][k]) / 3.0);
        let px = tm.texture.pixel(
            (c[0] * 256.0) as usize,
            (c[1] * 256.0) as usize,
        );
        assert!((px[0] - 1.0).abs() <= 1.0 / 255.0 && px[1] <= 1.0 / 255.0 && px[2] <= 1.0 / 255.0, "{px:?}");
    }
}

#[test]
fn hemisphere_colours_land_on_the_right_side() {
    let red = [1.0, 0.0, 0.0];
    let blue = [0.0, 0.0, 1.0];
    let scene = splat_sphere(800, 0.5, |p| if p[2] >= 0.0 { red } else { blue });
    let (tm, _) = extract_textured_mesh(&scene, &small_rig(64), &small_config()).unwrap();
    let size = tm.texture.width();
    let (mut good, mut total) = (0, 0);
    for t in 0..tm.mesh.triangles.len() {
        let [a, b, c] = tm.mesh.triangles[t].map(|v| tm.mesh.vertex(v));
        let centroid = (a + b + c) / 3.0;
        // only the outer shell is visible; skip the seam band
        if centroid.norm() < 0.45 || centroid.z.abs() < 0.1 {
            continue;
        }
        let uv = tm.triangle_uvs(t);
        let u: [f64; 2] = std::array::from_fn(|k| (uv[0][k] + uv[1][k] + uv[2][k]) / 3.0);
        let px = tm.texture.pixel(((u[0] * size as f64) as usize).min(size - 1), ((u[1] * size as f64) as usize).min(size - 1));
        let expected = if centroid.z > 0.0 { red } else { blue };
        total += 1;
        if (0..3).all(|k| (px[k] - expected[k]).abs() < 0.25) {
            good += 1;
        }
    }
    assert!(total > 100);
    assert!(good as f64 >= 0.95 * total as f64, "{good}/{total}");
}

#[test]
fn texels_seen_by_no_view_take_their_neighbours_colour() {
    // a flat square seen only from the front; its back face is never visible
    let scene = splat_sphere(400, 0.4, |_| [0.2, 0.6, 0.2]);
    let m = TriMesh::new(
        vec![[-0.2, -0.2, 0.45], [0.2, -0.2, 0.45], [0.2, 0.2, 0.45], [-0.2, 0.2, 0.45]],
        vec![[0, 1, 2], [0, 2, 3], [0, 2, 1], [0, 3, 2]],
    );
    let tm = unwrap_uv(&m, 64).unwrap();
    let cam = Camera::orbit(0.0, 0.0, 2.5, 49.0, 64, 64);
    let tex = backproject_colors(&tm, &scene, &[cam], &BackprojectSettings::default()).unwrap();
    for p in tex.data().chunks(3) {
        assert!((p[1] - 0.6).abs() < 0.1 && p[0] < 0.35, "{p:?}");
    }
}

#[test]
fn textured_mesh_reproduces_the_scene_renders() {
    let scene = gray_sphere();
    let rig = small_rig(64);
    let cfg = MeshConfig {
        texture_size: 512,
        ..small_config()
    };
    let (tm, _) = extract_textured_mesh(&scene, &rig, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for cam in &rig {
        let target = render(&scene, cam).rgb();
        let shading = Shading::Texture {
            uvs: &tm.uvs,
            texture: &tm.texture,
        };
        let view = rasterize(&tm.mesh, shading, cam, scene.background).image.rgb();
        worst = worst.max(view.mean_abs_diff_rgb(&target).unwrap());
    }
    assert!(worst <= 0.1, "worst MAE {worst}");
}

fn sphere_textured(size: usize) -> TexturedMesh {
    let mut tm = unwrap_uv(&icosphere(3).scaled(0.5), size).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for v in tm.texture.data_mut() {
        *v = rng.random();
    }
    tm
}

#[test]
fn identity_refine_oracle_leaves_the_texture_bitwise_unchanged() {
    let tm = sphere_textured(128);
    let out = refine_texture(&tm, &small_rig(48), &IdentityOracle, "a sphere", &RefineConfig::default(), 3).unwrap();
    assert_eq!(out.losses.len(), RefineConfig::default().n_steps);
    assert!(out.losses.iter().all(|&l| l == 0.0));
    assert_eq!(out.mesh.texture.data(), tm.texture.data());
}

#[test]
fn zero_refine_steps_change_nothing() {
    let tm = sphere_textured(64);
    let cfg = RefineConfig {
        n_steps: 0,
        ..RefineConfig::default()
    };
    let oracle = ProceduralOracle::new("sharpen", ProceduralEdit::Sharpen { amount: 0.5, levels: 8 }, 1.0);
    let out = refine_texture(&tm, &small_rig(32), &oracle, "a sphere", &cfg, 3).unwrap();
    assert_eq!(out.mesh, tm);
}

#[test]
fn fixed_target_is_reached_from_a_static_camera() {
    let tm = sphere_textured(512);
    let cam = Camera::orbit(30.0, 20.0, 2.5, 49.0, 48, 48);
    let mut target = ImageBuffer::new(48, 48, 3);
    for y in 0..48 {
        for x in 0..48 {
            target.pixel_mut(x, y).copy_from_slice(&[x as f64 / 47.0, y as f64 / 47.0, 0.3]);
        }
    }
    let oracle = ProceduralOracle::new("fixed", ProceduralEdit::Fixed(target.clone()), 1.0);
    let cfg = RefineConfig {
        n_steps: 200,
        ..RefineConfig::default()
    };
    let out = refine_texture(&tm, std::slice::from_ref(&cam), &oracle, "a gradient", &cfg, 9).unwrap();
    let shading = Shading::Texture {
        uvs: &out.mesh.uvs,
        texture: &out.mesh.texture,
    };
    let view = rasterize(&out.mesh.mesh, shading, &cam, [1.0; 3]);
    let mut worst: f64 = 0.0;
    for (i, texel) in view.texel.iter().enumerate() {
        if texel.is_some() {
            for k in 0..3 {
                worst = worst.max((view.image.data()[4 * i + k] - target.data()[3 * i + k]).abs());
            }
        }
    }
    assert!(worst < 2.0 / 255.0, "worst texel error {worst}");
}
