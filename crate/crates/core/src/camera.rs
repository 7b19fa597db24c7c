//! Orbit cameras looking at the scene origin, and the multi-ring capture rig.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole camera on a sphere around the origin.
///
/// World space is Y-up and right-handed. Camera space follows the
/// x-right / y-down / z-forward convention; pixel centers sit at `i + 0.5`.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub azimuth: f64,
    pub elevation: f64,
    pub radius: f64,
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    world_to_camera: Matrix3<f64>,
    translation: Vector3<f64>,
    position: Vector3<f64>,
    focal: f64,
}

impl Camera {
    /// Camera at `(azimuth, elevation)` degrees on a sphere of `radius`, looking at the origin.
    pub fn orbit(azimuth: f64, elevation: f64, radius: f64, fov_y: f64, width: usize, height: usize) -> Self {
        let (az, el) = (azimuth.to_radians(), elevation.to_radians());
        let position = Vector3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos()) * radius;
        let forward = (-position).normalize();
        let mut up = Vector3::new(0.0, 1.0, 0.0);
        if forward.cross(&up).norm() < 1e-9 {
            up = Vector3::new(0.0, 0.0, -1.0);
        }
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let world_to_camera = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(world_to_camera * position);
        let focal = 0.5 * height as f64 / (0.5 * fov_y.to_radians()).tan();
        Self {
            azimuth,
            elevation,
            radius,
            fov_y,
            width,
            height,
            world_to_camera,
            translation,
            position,
            focal,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.world_to_camera
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn position(&self) -> Vector3<f64> {
        self.position
    }

    pub fn forward(&self) -> Vector3<f64> {
        self.world_to_camera.row(2).transpose()
    }

    /// Focal length in pixels (square pixels).
    pub fn focal(&self) -> f64 {
        self.focal
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (0.5 * self.width as f64, 0.5 * self.height as f64)
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.world_to_camera * p + self.translation
    }

    /// Pixel coordinates and camera depth of a world point; `None` when behind `near`.
    pub fn project(&self, p: &Vector3<f64>, near: f64) -> Option<(f64, f64, f64)> {
        let c = self.world_to_camera(p);
        if c.z <= near {
            return None;
        }
        let (cx, cy) = self.principal_point();
        Some((self.focal * c.x / c.z + cx, self.focal * c.y / c.z + cy, c.z))
    }

    pub fn with_size(&self, width: usize, height: usize) -> Camera {
        Camera::orbit(self.azimuth, self.elevation, self.radius, self.fov_y, width, height)
    }
}

/// Capture rig settings: rings of evenly spaced azimuths at fixed elevations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigSettings {
    pub cameras_per_ring: usize,
    pub elevations: Vec<f64>,
    pub radius: f64,
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for RigSettings {
    fn default() -> Self {
        Self {
            cameras_per_ring: 10,
            elevations: vec![0.0, 30.0],
            radius: 2.5,
            fov_y: 49.0,
            width: 128,
            height: 128,
        }
    }
}

impl RigSettings {
    pub fn build(&self) -> Result<CameraRig> {
        build_camera_rig(
            self.cameras_per_ring,
            &self.elevations,
            self.radius,
            self.fov_y,
            (self.width, self.height),
        )
    }
}

/// Cameras ordered ring by ring (elevation order as given), azimuth ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraRig {
    pub cameras: Vec<Camera>,
}

impl CameraRig {
    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Camera> {
        self.cameras.iter()
    }
}

pub fn build_camera_rig(
    n_per_ring: usize,
    elevations: &[f64],
    radius: f64,
    fov_y: f64,
    image_size: (usize, usize),
) -> Result<CameraRig> {
    if n_per_ring == 0 {
        return Err(Error::InvalidArgument("cameras per ring must be at least 1".into()));
    }
    if elevations.is_empty() {
        return Err(Error::InvalidArgument("elevation list is empty".into()));
    }
    if !(radius > 0.0) || !(fov_y > 0.0 && fov_y < 180.0) || image_size.0 == 0 || image_size.1 == 0 {
        return Err(Error::InvalidArgument(format!(
            "invalid camera intrinsics: radius {radius}, fov {fov_y}, size {image_size:?}"
        )));
    }
    let mut cameras = Vec::with_capacity(n_per_ring * elevations.len());
    for &el in elevations {
        for k in 0..n_per_ring {
            let az = k as f64 * 360.0 / n_per_ring as f64;
            cameras.push(Camera::orbit(az, el, radius, fov_y, image_size.0, image_size.1));
        }
    }
    Ok(CameraRig { cameras })
}
