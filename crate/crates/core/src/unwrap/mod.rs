//! Fringe-order recovery.
//!
//! - [`spu_unwrap`]: stereo phase unwrapping. Each camera-1 pixel yields up
//!   to `K` candidate 3D points (one per order) on the projector's fringe
//!   planes; candidates outside the depth range are dropped, the rest are
//!   projected into camera 2 (and 3) and the order whose wrapped phase
//!   agrees best is kept.
//! - [`adc_update`]: per-pixel depth windows around a previous reconstruction.
//! - [`reference_unwrap`]: orders from the absolute phase of a reference plane.
//! - [`tpu_hierarchical`]: orders from a unit-frequency absolute phase.

mod spu;

pub use spu::{
    build_candidates, phase_similarity_select, sample_phase, spu_unwrap, Candidate,
    CandidateSet, SpuConfig,
};

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::geometry::Rig;
use crate::phase::{retrieve_ps, PhaseError, PhaseMaps, DEFAULT_MODULATION_THRESHOLD};
use crate::simulator::{render_unit_stack, FringeStack, ReferenceRecord, SimError};
use crate::{wrap_phase, Grid, Mask};

/// Sentinel for pixels without a decided order.
pub const UNDECIDED: i32 = -1;

/// Wrapped phase map with its validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrappedPhase {
    pub phi: Grid<f64>,
    pub mask: Mask,
}

impl From<&PhaseMaps> for WrappedPhase {
    fn from(p: &PhaseMaps) -> Self {
        Self {
            phi: p.phi.clone(),
            mask: p.mask.clone(),
        }
    }
}

impl From<PhaseMaps> for WrappedPhase {
    fn from(p: PhaseMaps) -> Self {
        Self {
            phi: p.phi,
            mask: p.mask,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderMap {
    pub k: Grid<i32>,
    /// Wrapped-phase mismatch of the chosen order (rad).
    pub confidence: Grid<f64>,
    pub mask: Mask,
}

impl OrderMap {
    pub fn undecided(width: usize, height: usize) -> Self {
        Self {
            k: Grid::filled(width, height, UNDECIDED),
            confidence: Grid::filled(width, height, PI),
            mask: Grid::filled(width, height, false),
        }
    }

    /// Order map taken verbatim from known orders (e.g. simulator truth).
    pub fn from_orders(k: Grid<i32>, mask: &Mask) -> Self {
        let k = k.zip_map(mask, |&k, &m| if m { k } else { UNDECIDED });
        Self {
            confidence: Grid::filled(k.width(), k.height(), 0.0),
            mask: k.map(|&k| k >= 0),
            k,
        }
    }

    pub fn decided_count(&self) -> usize {
        self.mask.count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DepthRange {
    /// World-z interval (mm) for every pixel.
    Global { zmin: f64, zmax: f64 },
    /// Per-pixel window `center ± half_width`, intersected with the global
    /// interval; NaN centres fall back to the global interval.
    PerPixel {
        center: Grid<f64>,
        half_width: f64,
        zmin: f64,
        zmax: f64,
    },
}

impl DepthRange {
    pub fn global(volume: (f64, f64)) -> Self {
        DepthRange::Global {
            zmin: volume.0,
            zmax: volume.1,
        }
    }

    pub fn bounds_at(&self, x: usize, y: usize) -> (f64, f64) {
        match self {
            DepthRange::Global { zmin, zmax } => (*zmin, *zmax),
            DepthRange::PerPixel {
                center,
                half_width,
                zmin,
                zmax,
            } => {
                let c = *center.get(x, y);
                if c.is_finite() {
                    ((c - half_width).max(*zmin), (c + half_width).min(*zmax))
                } else {
                    (*zmin, *zmax)
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let (zmin, zmax, hw) = match self {
            DepthRange::Global { zmin, zmax } => (*zmin, *zmax, 1.0),
            DepthRange::PerPixel {
                half_width,
                zmin,
                zmax,
                ..
            } => (*zmin, *zmax, *half_width),
        };
        if !(zmin < zmax) {
            return Err(format!("empty depth range [{zmin}, {zmax}]"));
        }
        if !(hw > 0.0) {
            return Err("half width must be positive".into());
        }
        Ok(())
    }
}

/// Adaptive depth constraint from a previous frame's depth map.
pub fn adc_update(prev_depth: &Grid<f64>, half_width: f64, volume: (f64, f64)) -> DepthRange {
    DepthRange::PerPixel {
        center: prev_depth.clone(),
        half_width,
        zmin: volume.0,
        zmax: volume.1,
    }
}

/// Reference-plane data in camera 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceData {
    pub stacks: Vec<FringeStack>,
    pub k_ref: Grid<i32>,
    pub phi_ref: Grid<f64>,
    /// Absolute reference phase `φ_ref + 2π k_ref`.
    pub abs_ref: Grid<f64>,
    pub mask: Mask,
}

impl ReferenceData {
    /// Builds reference data from the reference stacks and a known order map.
    pub fn from_orders(stacks: Vec<FringeStack>, k_ref: &Grid<i32>) -> Result<Self, PhaseError> {
        let maps = retrieve_ps(&stacks[0], DEFAULT_MODULATION_THRESHOLD)?;
        let mask = maps.mask.zip_map(k_ref, |&m, &k| m && k >= 0);
        let abs_ref = Grid::from_fn(maps.phi.width(), maps.phi.height(), |x, y| {
            if *mask.get(x, y) {
                maps.phi.get(x, y) + TAU * *k_ref.get(x, y) as f64
            } else {
                0.0
            }
        });
        Ok(Self {
            stacks,
            k_ref: k_ref.zip_map(&mask, |&k, &m| if m { k } else { UNDECIDED }),
            phi_ref: maps.phi,
            abs_ref,
            mask,
        })
    }

    /// Reference data as a calibrated system would capture it: the
    /// reference plane's orders come from temporal unwrapping against an
    /// extra unit-frequency capture.
    pub fn capture(rig: &Rig, record: &ReferenceRecord) -> Result<Self, SimError> {
        let stack = &record.stacks[0];
        let scene = crate::simulator::reference_plane_scene();
        let (unit, _) = render_unit_stack(&scene, &rig.cameras[0], &rig.projector, stack.steps, 0)?;
        let ps = |s: &FringeStack| {
            retrieve_ps(s, DEFAULT_MODULATION_THRESHOLD).map_err(|e| SimError::Dataset(e.to_string()))
        };
        let high = WrappedPhase::from(ps(stack)?);
        let unit = WrappedPhase::from(ps(&unit)?);
        let orders = tpu_hierarchical(&high, &unit, rig.projector.periods);
        Self::from_orders(record.stacks.clone(), &orders.k).map_err(|e| SimError::Dataset(e.to_string()))
    }
}

/// Picks the order that puts `φ + 2πk` closest to the reference absolute
/// phase: `k = round((Φ_ref − φ)/2π)`, clamped to `[0, K−1]`.
pub fn reference_unwrap(phi: &WrappedPhase, reference: &ReferenceData, periods: u32) -> OrderMap {
    let (w, h) = phi.phi.dims();
    let mut out = OrderMap::undecided(w, h);
    let kmax = periods as i32 - 1;
    for y in 0..h {
        for x in 0..w {
            if !(*phi.mask.get(x, y) && *reference.mask.get(x, y)) {
                continue;
            }
            let p = *phi.phi.get(x, y);
            let r = *reference.abs_ref.get(x, y);
            let k = (((r - p) / TAU).round() as i32).clamp(0, kmax);
            out.k.set(x, y, k);
            out.confidence.set(x, y, (p + TAU * k as f64 - r).abs());
            out.mask.set(x, y, true);
        }
    }
    out
}

/// Absolute unit-frequency phase in `[0, 2π)` from its wrapped value.
pub fn unit_absolute(phi_unit: f64) -> f64 {
    phi_unit.rem_euclid(TAU)
}

/// Two-frequency temporal unwrapping: `k = round((K·Φ_unit − φ_high)/2π)`.
/// Orders outside `[0, K−1]` are left undecided.
pub fn tpu_hierarchical(high: &WrappedPhase, unit: &WrappedPhase, periods: u32) -> OrderMap {
    let (w, h) = high.phi.dims();
    let mut out = OrderMap::undecided(w, h);
    for y in 0..h {
        for x in 0..w {
            if !(*high.mask.get(x, y) && *unit.mask.get(x, y)) {
                continue;
            }
            let k_phase = periods as f64 * unit_absolute(*unit.phi.get(x, y));
            let p = *high.phi.get(x, y);
            let k = ((k_phase - p) / TAU).round();
            if k >= 0.0 && k < periods as f64 {
                out.k.set(x, y, k as i32);
                out.confidence.set(x, y, wrap_phase(p + TAU * k - k_phase).abs());
                out.mask.set(x, y, true);
            }
        }
    }
    out
}

/// `Φ = φ + 2πk` on decided pixels; the returned mask excludes undecided
/// and invalid-phase pixels (their phase is set to 0).
pub fn unwrap_apply(phi: &WrappedPhase, orders: &OrderMap) -> (Grid<f64>, Mask) {
    let mask = phi.mask.and(&orders.mask);
    let abs = Grid::from_fn(phi.phi.width(), phi.phi.height(), |x, y| {
        if *mask.get(x, y) {
            phi.phi.get(x, y) + TAU * *orders.k.get(x, y) as f64
        } else {
            0.0
        }
    });
    (abs, mask)
}
