use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{scene::Scene, scenes::reference_plane_scene, SimError};
use crate::geometry::{CameraModel, ProjectorModel, Rig};
use crate::{Grid, Mask};

/// `N` phase-shifted images of one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeStack {
    pub images: Vec<Grid<f64>>,
    pub steps: usize,
    pub periods: u32,
    pub camera_id: usize,
}

impl FringeStack {
    pub fn dims(&self) -> (usize, usize) {
        self.images[0].dims()
    }

    pub fn new(images: Vec<Grid<f64>>, periods: u32, camera_id: usize) -> Result<Self, SimError> {
        if images.len() < 3 {
            return Err(SimError::TooFewSteps(images.len()));
        }
        if images.iter().any(|im| !im.same_dims(&images[0])) {
            return Err(SimError::Dataset("stack images differ in size".into()));
        }
        Ok(Self {
            steps: images.len(),
            images,
            periods,
            camera_id,
        })
    }
}

/// Exact per-pixel truth of a render. Off-mask phase entries are 0 and
/// orders are −1; depth is NaN where the ray misses the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// World z of the visible surface point (mm).
    pub depth: Grid<f64>,
    pub abs_phase: Grid<f64>,
    pub wrapped: Grid<f64>,
    pub orders: Grid<i32>,
    pub mask: Mask,
    /// Index of the visible primitive, −1 for background.
    pub primitive: Grid<i32>,
    /// Fringe amplitude `B` at the visible point (0 when unlit).
    pub amplitude: Grid<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// `K` periods with the last half period dark.
    HighFrequency,
    /// A single period across the full projector, no blanking.
    Unit,
}

struct PixelSample {
    intensities_base: Option<(f64, f64, f64)>, // (A, B, Φ) when lit
    black: f64,
    depth: f64,
    primitive: i32,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal deviate addressed by (seed, step, pixel); independent of
/// evaluation order.
fn pixel_gaussian(seed: u64, step: usize, pixel: usize) -> f64 {
    let h = splitmix64(seed ^ splitmix64((step as u64) << 40 ^ pixel as u64));
    let h2 = splitmix64(h);
    let u1 = ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    let u2 = (h2 >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Splits `Φ` into order and wrapped phase with `φ ∈ (−π, π]`, `Φ = φ + 2πk`.
pub(crate) fn split_phase(phase: f64) -> (i32, f64) {
    let mut k = (phase / TAU).round();
    let mut w = phase - TAU * k;
    if w <= -PI {
        k -= 1.0;
        w = phase - TAU * k;
    } else if w > PI {
        k += 1.0;
        w = phase - TAU * k;
    }
    (k as i32, w)
}

fn sample_pixel(
    scene: &Scene,
    cam: &CameraModel,
    proj: &ProjectorModel,
    pattern: PatternKind,
    x: usize,
    y: usize,
) -> Result<PixelSample, SimError> {
    let ray = cam.backproject_ray(&Vector2::new(x as f64, y as f64))?;
    let Some(hit) = scene.nearest_hit(&ray) else {
        return Ok(PixelSample {
            intensities_base: None,
            black: 0.0,
            depth: f64::NAN,
            primitive: -1,
        });
    };
    let p = hit.point;
    let a = scene.reflectivity.average.value(p.x, p.y);
    let b = scene.reflectivity.amplitude.value(p.x, p.y);
    let lit = proj.illuminated_coordinate(&p).and_then(|coord| {
        let phase = match pattern {
            PatternKind::HighFrequency => {
                let phase = proj.coordinate_to_phase(coord);
                (phase < proj.max_phase() - PI).then_some(phase)
            }
            PatternKind::Unit => Some(TAU * coord / proj.axis_extent()),
        }?;
        (!scene.occluded(&p, &proj.lens.center())).then_some(phase)
    });
    Ok(PixelSample {
        intensities_base: lit.map(|phase| (a, b, phase)),
        black: a - b,
        depth: p.z,
        primitive: hit.primitive as i32,
    })
}

fn render_with(
    scene: &Scene,
    cam: &CameraModel,
    proj: &ProjectorModel,
    steps: usize,
    seed: u64,
    pattern: PatternKind,
) -> Result<(FringeStack, GroundTruth), SimError> {
    if steps < 3 {
        return Err(SimError::TooFewSteps(steps));
    }
    scene.validate()?;
    let (w, h) = (cam.width, cam.height);
    let mut samples = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            samples.push(sample_pixel(scene, cam, proj, pattern, x, y)?);
        }
    }
    if samples.iter().all(|s| s.primitive < 0) {
        return Err(SimError::EmptyRender);
    }

    let noise = scene.noise;
    let images = (0..steps)
        .map(|n| {
            let shift = TAU * n as f64 / steps as f64;
            let data = samples
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let clean = match s.intensities_base {
                        Some((a, b, phase)) => a + b * (phase + shift).cos(),
                        None => s.black,
                    };
                    let mut v = clean;
                    if noise.sigma > 0.0 {
                        v += noise.sigma * pixel_gaussian(seed, n, i);
                    }
                    if noise.quantize {
                        v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
                    }
                    v
                })
                .collect();
            Grid::from_vec(w, h, data)
        })
        .collect();

    let mut truth = GroundTruth {
        depth: Grid::filled(w, h, f64::NAN),
        abs_phase: Grid::filled(w, h, 0.0),
        wrapped: Grid::filled(w, h, 0.0),
        orders: Grid::filled(w, h, -1),
        mask: Grid::filled(w, h, false),
        primitive: Grid::filled(w, h, -1),
        amplitude: Grid::filled(w, h, 0.0),
    };
    for (i, s) in samples.iter().enumerate() {
        let (x, y) = (i % w, i / w);
        truth.depth.set(x, y, s.depth);
        truth.primitive.set(x, y, s.primitive);
        if let Some((_, b, phase)) = s.intensities_base {
            let (k, wrapped) = split_phase(phase);
            truth.abs_phase.set(x, y, phase);
            truth.wrapped.set(x, y, wrapped);
            truth.orders.set(x, y, k);
            truth.mask.set(x, y, true);
            truth.amplitude.set(x, y, b);
        }
    }
    let periods = match pattern {
        PatternKind::HighFrequency => proj.periods,
        PatternKind::Unit => 1,
    };
    Ok((
        FringeStack {
            images,
            steps,
            periods,
            camera_id: 0,
        },
        truth,
    ))
}

/// Renders `steps` phase-shifted images of the `K`-period pattern as seen by
/// `cam`, with exact ground truth. Noise is a pure function of `seed`.
pub fn render_fringe_stack(
    scene: &Scene,
    cam: &CameraModel,
    proj: &ProjectorModel,
    steps: usize,
    seed: u64,
) -> Result<(FringeStack, GroundTruth), SimError> {
    render_with(scene, cam, proj, steps, seed, PatternKind::HighFrequency)
}

/// Renders the single-period pattern. Its ground-truth phase spans
/// `[0, 2π)` over the projector, so orders are 0 or 1.
pub fn render_unit_stack(
    scene: &Scene,
    cam: &CameraModel,
    proj: &ProjectorModel,
    steps: usize,
    seed: u64,
) -> Result<(FringeStack, GroundTruth), SimError> {
    render_with(scene, cam, proj, steps, seed, PatternKind::Unit)
}

/// Per-camera noise seed derived from a scene seed.
pub(crate) fn camera_seed(seed: u64, camera: usize) -> u64 {
    splitmix64(seed ^ (0xC0FF_EE00 + camera as u64).wrapping_mul(0x2545_F491_4F6C_DD1D))
}

/// Renders the scene through every rig camera.
pub fn render_rig(
    scene: &Scene,
    rig: &Rig,
    steps: usize,
    seed: u64,
) -> Result<Vec<(FringeStack, GroundTruth)>, SimError> {
    rig.cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let (mut stack, truth) =
                render_fringe_stack(scene, cam, &rig.projector, steps, camera_seed(seed, i))?;
            stack.camera_id = i;
            Ok((stack, truth))
        })
        .collect()
}

/// The board plane `z = 0` seen by all rig cameras; captured once per setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRecord {
    pub stacks: Vec<FringeStack>,
    pub truth: Vec<GroundTruth>,
}

impl ReferenceRecord {
    /// Fringe-order map of the reference plane in camera 1.
    pub fn orders(&self) -> &Grid<i32> {
        &self.truth[0].orders
    }
}

/// Noise-free render of the reference plane through every rig camera.
pub fn render_reference(rig: &Rig, steps: usize) -> Result<ReferenceRecord, SimError> {
    if rig.cameras.len() < 2 {
        return Err(SimError::TooFewCameras);
    }
    let scene = reference_plane_scene();
    let mut stacks = Vec::new();
    let mut truth = Vec::new();
    for (i, cam) in rig.cameras.iter().enumerate() {
        let (mut s, t) = render_fringe_stack(&scene, cam, &rig.projector, steps, 0)?;
        if t.mask.count() == 0 {
            return Err(SimError::ReferenceNotVisible(i));
        }
        s.camera_id = i;
        stacks.push(s);
        truth.push(t);
    }
    Ok(ReferenceRecord { stacks, truth })
}
