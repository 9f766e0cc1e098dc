use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::scene::{ClipRect, NoiseModel, Primitive, Reflectivity, Scene};
use crate::geometry::Rig;

/// Nominal sphere-pair artifact: two spheres and their centre distance (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePairTruth {
    pub radius1: f64,
    pub radius2: f64,
    pub center_distance: f64,
}

pub const SPHERE_PAIR_TRUTH: SpherePairTruth = SpherePairTruth {
    radius1: 25.3989,
    radius2: 25.4038,
    center_distance: 100.0532,
};

const REF_A: f64 = 0.5;
const REF_B: f64 = 0.4;

/// Noise-free board plane at `z = 0`.
pub fn reference_plane_scene() -> Scene {
    Scene {
        primitives: vec![Primitive::horizontal_plane(0.0)],
        reflectivity: Reflectivity::uniform(REF_A, REF_B),
        noise: NoiseModel::none(),
    }
}

/// Plane through `(0, 0, z0)` tilted by `tilt_deg` about the world y axis.
pub fn tilted_plane_scene(z0: f64, tilt_deg: f64, noise: NoiseModel) -> Scene {
    let t = tilt_deg.to_radians();
    let normal = [t.sin(), 0.0, t.cos()];
    Scene {
        primitives: vec![Primitive::Plane {
            normal,
            offset: normal[2] * z0,
            clip: None,
        }],
        reflectivity: Reflectivity::uniform(0.45, 0.35),
        noise,
    }
}

/// Two spheres with the nominal radii and centre distance, 30 mm above a
/// background plane at `z = −40`.
pub fn sphere_pair_scene(noise: NoiseModel) -> Scene {
    let t = SPHERE_PAIR_TRUTH;
    let half = t.center_distance / 2.0;
    Scene {
        primitives: vec![
            Primitive::Sphere {
                center: [-half, 0.0, -10.0],
                radius: t.radius1,
            },
            Primitive::Sphere {
                center: [half, 0.0, -10.0],
                radius: t.radius2,
            },
            Primitive::horizontal_plane(-40.0),
        ],
        reflectivity: Reflectivity::uniform(0.45, 0.35),
        noise,
    }
}

/// Rate of absolute-phase change per mm of world depth along camera 1's
/// central ray, evaluated at the board.
pub fn phase_per_mm(rig: &Rig) -> f64 {
    let cam = &rig.cameras[0];
    let c = Vector2::new(cam.intrinsics.cx, cam.intrinsics.cy);
    let ray = cam.backproject_ray(&c).expect("principal point backprojects");
    let phase_at = |z: f64| {
        let s = (z - ray.origin.z) / ray.direction.z;
        let coord = rig
            .projector
            .illuminated_coordinate(&ray.at(s))
            .expect("board centre is illuminated");
        rig.projector.coordinate_to_phase(coord)
    };
    (phase_at(1.0) - phase_at(-1.0)).abs() / 2.0
}

/// Depth in mm that shifts the observed phase by one fringe period.
pub fn depth_per_period(rig: &Rig) -> f64 {
    std::f64::consts::TAU / phase_per_mm(rig)
}

/// Strips of flat plates across x, their heights stepping in half-period
/// increments from −3 to +3 fringe periods around the board.
pub fn staircase_scene(rig: &Rig) -> Scene {
    let period = depth_per_period(rig);
    let steps = 13;
    let (x0, x1) = (-110.0, 110.0);
    let width = (x1 - x0) / steps as f64;
    let primitives = (0..steps)
        .map(|i| {
            let offset = (i as f64 - 6.0) * 0.5 * period;
            Primitive::Plane {
                normal: [0.0, 0.0, 1.0],
                offset,
                clip: Some(ClipRect {
                    x_min: x0 + i as f64 * width,
                    x_max: x0 + (i + 1) as f64 * width,
                    y_min: -150.0,
                    y_max: 150.0,
                }),
            }
        })
        .collect();
    Scene {
        primitives,
        reflectivity: Reflectivity::uniform(0.45, 0.35),
        noise: NoiseModel::none(),
    }
}

/// World x of the plate boundary in the discontinuity scene.
pub fn discontinuity_seam_x() -> f64 {
    0.0
}

/// Near plate `z = 0` for `x < 0` and a far plane below it whose depth is
/// chosen so that, seen from camera 1, the phase jumps by exactly
/// `gap_periods · 2π` across the seam (on the row through `y = 0`).
pub fn make_discontinuity_scene_with_gap(rig: &Rig, gap_periods: f64) -> Scene {
    let cam = &rig.cameras[0];
    let seam = Vector3::new(discontinuity_seam_x(), 0.0, 0.0);
    let dir = (seam - cam.center()).normalize();
    let proj = &rig.projector;
    let phase = |p: &Vector3<f64>| {
        proj.coordinate_to_phase(
            proj.illuminated_coordinate(p)
                .expect("discontinuity seam is illuminated"),
        )
    };
    let near = phase(&seam);
    let target = gap_periods * std::f64::consts::TAU;
    // phase difference grows monotonically with the drop below the seam
    let jump = |h: f64| {
        let s = h / -dir.z;
        phase(&(seam + dir * s)) - near - target
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while jump(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if jump(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h = 0.5 * (lo + hi);
    Scene {
        primitives: vec![
            Primitive::Plane {
                normal: [0.0, 0.0, 1.0],
                offset: 0.0,
                clip: Some(ClipRect {
                    x_min: -1e4,
                    x_max: discontinuity_seam_x(),
                    y_min: -1e4,
                    y_max: 1e4,
                }),
            },
            Primitive::horizontal_plane(-h),
        ],
        reflectivity: Reflectivity::uniform(0.45, 0.35),
        noise: NoiseModel::none(),
    }
}

/// Two-plate scene whose depth gap is exactly one fringe period in camera 1,
/// so the fringes look continuous across the seam while the orders jump.
pub fn make_discontinuity_scene(rig: &Rig) -> Scene {
    make_discontinuity_scene_with_gap(rig, 1.0)
}
