//! Gaussian-splat scene reconstruction, text-guided editing through score
//! distillation, and textured mesh extraction.
//!
//! The crate is organised bottom-up:
//!
//! - [`scene`], [`camera`], [`image`], [`sh`]: value types and closed-form kernels.
//! - [`render`]: tile-based differentiable rasterizer (forward and backward).
//! - [`optim`]: photometric losses, Adam, densification and the reconstruction loop.
//! - [`edit`]: noise schedule, edit oracles, image codecs and the SDS edit loop.
//! - [`mesh`]: density field, marching cubes, decimation, UV atlas, texturing.
//! - [`metrics`]: embedding-space edit metrics.
//! - [`fixtures`]: analytic scenes used by tests and demos.

pub mod camera;
pub mod edit;
pub mod error;
pub mod fixtures;
pub mod image;
pub mod mesh;
pub mod metrics;
pub mod optim;
pub mod remote;
pub mod render;
pub mod scene;
pub mod sh;

pub use camera::{build_camera_rig, Camera, CameraRig, RigSettings};
pub use error::{Error, Result};
pub use image::ImageBuffer;
pub use scene::{GaussianSplat, Scene};
