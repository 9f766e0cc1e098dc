//! Ray-cast fringe renderer.
//!
//! Every camera pixel casts a ray, takes the nearest primitive hit and checks
//! whether the projector illuminates that point (inside its pixel array and
//! not shadowed by another primitive). Lit pixels receive
//! `I_n = A + B cos(Φ + 2πn/N)` with `Φ` linear in the projector coordinate
//! along the fringe axis; unlit surfaces show the projector black level
//! `A − B`, background pixels are 0.
//!
//! Fringe orders use `k = round(Φ / 2π)` so that `φ = Φ − 2πk ∈ (−π, π]`.
//! To keep `k ≤ K − 1` the high-frequency pattern leaves the final half
//! period of the projector dark. The unit-frequency pattern used for
//! temporal unwrapping is rendered without that blanking.

mod dataset;
mod render;
mod scene;
mod scenes;

pub use dataset::{
    generate_dataset, load_sample, DatasetManifest, DatasetRecipe, SampleData, SampleRecord,
    Split,
};
pub use render::{
    render_fringe_stack, render_reference, render_rig, render_unit_stack, FringeStack,
    GroundTruth, PatternKind, ReferenceRecord,
};
pub use scene::{
    ClipRect, CosineTerm, HeightField, Hit, NoiseModel, Primitive, Reflectivity, Scene,
    SmoothField,
};
pub use scenes::{
    depth_per_period, discontinuity_seam_x, make_discontinuity_scene, make_discontinuity_scene_with_gap,
    phase_per_mm, reference_plane_scene, sphere_pair_scene, staircase_scene, tilted_plane_scene,
    SpherePairTruth, SPHERE_PAIR_TRUTH,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("empty render")]
    EmptyRender,
    #[error("need at least 3 phase steps, got {0}")]
    TooFewSteps(usize),
    #[error("rig needs at least 2 cameras")]
    TooFewCameras,
    #[error("reference plane not visible from camera {0}")]
    ReferenceNotVisible(usize),
    #[error("could not place a visible scene after {0} attempts")]
    SceneOutsideView(usize),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Fpi(#[from] crate::fpi::FpiError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Calibration(#[from] crate::geometry::CalibrationError),
}
