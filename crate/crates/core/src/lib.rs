//! Fringe projection profilometry workbench.
//!
//! The crate simulates a calibrated camera/projector/camera rig, recovers
//! wrapped phase from phase-shifted (or single) fringe images, resolves fringe
//! orders with stereo geometric constraints, reference planes or temporal
//! unwrapping, and trains small four-path residual CNNs that perform phase
//! retrieval and fringe-order prediction from a single shot.
//!
//! Module map:
//!
//! - [`geometry`]: pinhole cameras with Brown–Conrady distortion, projector as
//!   inverse camera, rays, camera–projector and camera–camera triangulation.
//! - [`simulator`]: ray-cast fringe renderer with exact ground truth, reference
//!   plane capture and randomized training datasets.
//! - [`phase`]: N-step phase shifting, modulation masks and the Fourier-transform
//!   single-shot baseline.
//! - [`unwrap`]: stereo phase unwrapping (2/3 views, fixed and adaptive depth
//!   constraints), reference-plane and temporal unwrapping.
//! - [`neural`]: tensor kernels with reverse-mode gradients, the four-path CNN,
//!   Adam and the training loop.
//! - [`eval`]: sphere fitting, order/phase/depth error metrics and reports.
//! - [`pipeline`]: end-to-end orchestration used by the command line tool.

pub mod fpi;
pub mod geometry;
pub mod grid;
pub mod simulator;
pub mod phase;
pub mod unwrap;
pub mod reconstruct;
pub mod neural;
pub mod eval;
pub mod pipeline;

pub use grid::{Grid, Mask};

/// Wraps an angle into `(-π, π]`.
#[inline]
pub fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = x - TAU * (x / TAU).round();
    if w <= -PI {
        w += TAU;
    } else if w > PI {
        w -= TAU;
    }
    w
}
