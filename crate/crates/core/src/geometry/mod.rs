//! Pinhole camera/projector models and triangulation.
//!
//! Conventions used throughout the crate:
//!
//! - World frame: the first calibration pose of the board. The board is the
//!   `z = 0` plane, `+z` points toward the devices, depths are world `z` in mm.
//! - A device pose maps world coordinates into the device frame
//!   (`X_dev = R · X_world + t`); the optical axis is device `+z`.
//! - Pixel centres sit at integer coordinates; `u` grows to the right, `v` down.
//! - Lens distortion is Brown–Conrady with `(k1, k2, k3, p1, p2)`.
//! - The projector is an inverse camera whose fringe phase is linear in the
//!   undistorted coordinate along its fringe axis.

mod camera;
mod projector;
mod rig;
mod transform;
mod triangulate;

pub use camera::{CameraModel, Distortion, Intrinsics, Ray};
pub use projector::{FringeAxis, ProjectorModel};
pub use rig::{CalibrationError, Jitter, Rig, RigScale};
pub use transform::RigidTransform;
pub use triangulate::{
    intersect_fringe_plane,triangulate_camera_projector, triangulate_two_view, TwoViewPoint};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("behind camera")]
    BehindCamera,
    #[error("undistort divergence")]
    UndistortDivergence,
    #[error("phase out of projector range: {0}")]
    PhaseOutOfRange(f64),
    #[error("degenerate intersection")]
    DegenerateIntersection,
    #[error("degenerate baseline")]
    DegenerateBaseline,
    #[error("invalid model: {0}")]
    InvalidModel(String),
}
