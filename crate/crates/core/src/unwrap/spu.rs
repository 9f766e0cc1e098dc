use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{DepthRange, OrderMap, WrappedPhase, UNDECIDED};
use crate::geometry::{intersect_fringe_plane, CameraModel, Ray, Rig};
use crate::wrap_phase;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpuConfig {
    /// 2 (cameras 1–2) or 3 (cameras 1–3).
    pub views: usize,
    /// Best mismatch above this leaves the pixel undecided (rad).
    pub reject_threshold: f64,
    /// Best two mismatches closer than this leave the pixel undecided (rad).
    pub tie_margin: f64,
}

impl Default for SpuConfig {
    fn default() -> Self {
        Self {
            views: 2,
            reject_threshold: 0.5,
            tie_margin: 0.05,
        }
    }
}

impl SpuConfig {
    pub fn views(views: usize) -> Self {
        Self {
            views,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub k: i32,
    /// Triangulated world point (NaN when the order is geometrically invalid).
    pub point: Vector3<f64>,
    /// Projected pixels in cameras 2 (and 3); `None` off-sensor or not projected.
    pub pixels: Vec<Option<Vector2<f64>>>,
    /// Aggregated wrapped-phase mismatch (rad, in `[0, π]`); NaN until checked
    /// or when the candidate was discarded.
    pub mismatch: f64,
    pub in_range: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub pixel: (usize, usize),
    pub phi1: f64,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn in_range(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.in_range)
    }
}

fn candidates_for_ray(
    pixel: (usize, usize),
    ray: &Ray,
    phi1: f64,
    rig: &Rig,
    depth: &DepthRange,
    views: usize,
    out: &mut CandidateSet,
) {
    let proj = &rig.projector;
    let (zmin, zmax) = depth.bounds_at(pixel.0, pixel.1);
    out.pixel = pixel;
    out.phi1 = phi1;
    out.candidates.clear();
    for k in 0..proj.periods as i32 {
        let phase = phi1 + TAU * k as f64;
        let point = proj
            .phase_to_coordinate(phase)
            .ok()
            .and_then(|coord| intersect_fringe_plane(ray, coord, proj).ok())
            .map(|(p, _)| p);
        let in_range = point.is_some_and(|p| p.z >= zmin && p.z <= zmax);
        let pixels = if in_range {
            let p = point.unwrap();
            rig.cameras[1..views]
                .iter()
                .map(|cam| project_on_sensor(cam, &p))
                .collect()
        } else {
            Vec::new()
        };
        out.candidates.push(Candidate {
            k,
            point: point.unwrap_or_else(|| Vector3::repeat(f64::NAN)),
            pixels,
            mismatch: f64::NAN,
            in_range,
        });
    }
}

fn project_on_sensor(cam: &CameraModel, p: &Vector3<f64>) -> Option<Vector2<f64>> {
    cam.project(p).ok().filter(|px| cam.contains(px))
}

/// All `K` order hypotheses of a camera-1 pixel. Hypotheses whose absolute
/// phase leaves the projector or whose point falls outside the depth range
/// are kept but flagged `in_range = false` and never projected.
pub fn build_candidates(
    pixel: (usize, usize),
    phi1: f64,
    rig: &Rig,
    depth: &DepthRange,
    views: usize,
) -> Result<CandidateSet, crate::geometry::GeometryError> {
    let ray = rig.cameras[0].backproject_ray(&Vector2::new(pixel.0 as f64, pixel.1 as f64))?;
    let mut set = CandidateSet {
        pixel,
        phi1,
        candidates: Vec::with_capacity(rig.projector.periods as usize),
    };
    candidates_for_ray(pixel, &ray, phi1, rig, depth, views.clamp(2, rig.cameras.len()), &mut set);
    Ok(set)
}

/// Wrapped phase at a fractional pixel.
///
/// Bilinear interpolation of the unit phasor when all four neighbours are
/// valid; otherwise a least-squares plane through the locally unwrapped valid
/// pixels of the surrounding 4×4 block (at least 3, non-collinear, residuals
/// below 0.5 rad).
pub fn sample_phase(phase: &WrappedPhase, px: &Vector2<f64>) -> Option<f64> {
    let (w, h) = phase.phi.dims();
    let (u, v) = (px.x, px.y);
    if !(u >= -0.5 && v >= -0.5 && u < w as f64 - 0.5 && v < h as f64 - 0.5) {
        return None;
    }
    let (x0, y0) = (u.floor() as isize, v.floor() as isize);
    let (fx, fy) = (u - x0 as f64, v - y0 as f64);
    let valid = |x: isize, y: isize| {
        x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && *phase.mask.get(x as usize, y as usize)
    };
    let at = |x: isize, y: isize| *phase.phi.get(x as usize, y as usize);
    if valid(x0, y0) && valid(x0 + 1, y0) && valid(x0, y0 + 1) && valid(x0 + 1, y0 + 1) {
        let mut s = 0.0;
        let mut c = 0.0;
        for (x, y, wgt) in [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x0 + 1, y0, fx * (1.0 - fy)),
            (x0, y0 + 1, (1.0 - fx) * fy),
            (x0 + 1, y0 + 1, fx * fy),
        ] {
            let (sp, cp) = at(x, y).sin_cos();
            s += wgt * sp;
            c += wgt * cp;
        }
        if s == 0.0 && c == 0.0 {
            return None;
        }
        return Some(wrap_phase(s.atan2(c)));
    }

    // nearest valid pixel anchors the local unwrapping
    let mut pts: Vec<(f64, f64, f64)> = Vec::with_capacity(16);
    let mut anchor: Option<(f64, f64)> = None;
    for y in y0 - 1..=y0 + 2 {
        for x in x0 - 1..=x0 + 2 {
            if valid(x, y) {
                let d = (x as f64 - u).powi(2) + (y as f64 - v).powi(2);
                if anchor.is_none_or(|(bd, _)| d < bd) {
                    anchor = Some((d, at(x, y)));
                }
                pts.push((x as f64 - u, y as f64 - v, at(x, y)));
            }
        }
    }
    let (_, a) = anchor?;
    if pts.len() < 3 {
        return None;
    }
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for p in pts.iter_mut() {
        p.2 = a + wrap_phase(p.2 - a);
        let row = Vector3::new(1.0, p.0, p.1);
        ata += row * row.transpose();
        atb += row * p.2;
    }
    let sol = ata.try_inverse().filter(|_| {
        // collinear samples leave the plane unconstrained
        let det = ata.determinant();
        det.abs() > 1e-9
    })? * atb;
    if pts
        .iter()
        .any(|p| (sol[0] + sol[1] * p.0 + sol[2] * p.1 - p.2).abs() > 0.5)
    {
        return None;
    }
    Some(wrap_phase(sol[0]))
}

/// Scores in-range candidates against the other views and picks the order.
///
/// A candidate's mismatch in one view is `|wrap(φ_view − φ1)|`. Candidates
/// not observable in camera 2 are discarded. With three views the two
/// mismatches are summed; when camera 3 cannot observe a candidate its
/// camera-2 mismatch stands in. Thresholds apply to the per-view mean, so
/// they keep their meaning for both view counts. Returns
/// `(k or −1, best mean mismatch)`.
pub fn phase_similarity_select(
    set: &mut CandidateSet,
    others: &[&WrappedPhase],
    cfg: &SpuConfig,
) -> (i32, f64) {
    let mut best = (f64::INFINITY, UNDECIDED);
    let mut second = f64::INFINITY;
    for c in set.candidates.iter_mut().filter(|c| c.in_range) {
        let mut sum = 0.0;
        let mut seen = 0usize;
        for (px, ph) in c.pixels.iter().zip(others) {
            if let Some(s) = px.as_ref().and_then(|p| sample_phase(ph, p)) {
                sum += wrap_phase(s - set.phi1).abs();
                seen += 1;
            } else if seen == 0 {
                // camera 2 must observe the candidate
                break;
            }
        }
        if seen == 0 {
            c.mismatch = f64::NAN;
            continue;
        }
        let mean = sum / seen as f64;
        c.mismatch = mean;
        if mean < best.0 {
            second = best.0;
            best = (mean, c.k);
        } else if mean < second {
            second = mean;
        }
    }
    if best.1 == UNDECIDED {
        return (UNDECIDED, PI);
    }
    if best.0 > cfg.reject_threshold || second - best.0 < cfg.tie_margin {
        return (UNDECIDED, best.0);
    }
    (best.1, best.0)
}

/// Stereo phase unwrapping of camera 1's wrapped phase.
///
/// `others` holds the wrapped phase of camera 2 and, for three views,
/// camera 3 (extra entries are ignored).
pub fn spu_unwrap(
    phi1: &WrappedPhase,
    others: &[&WrappedPhase],
    rig: &Rig,
    depth: &DepthRange,
    cfg: &SpuConfig,
) -> OrderMap {
    let views = cfg.views.clamp(2, (others.len() + 1).min(rig.cameras.len()));
    let others = &others[..views - 1];
    let cam = &rig.cameras[0];
    let (w, h) = phi1.phi.dims();
    let mut out = OrderMap::undecided(w, h);
    let mut set = CandidateSet {
        pixel: (0, 0),
        phi1: 0.0,
        candidates: Vec::with_capacity(rig.projector.periods as usize),
    };
    for y in 0..h {
        for x in 0..w {
            if !*phi1.mask.get(x, y) {
                continue;
            }
            let Ok(ray) = cam.backproject_ray(&Vector2::new(x as f64, y as f64)) else {
                continue;
            };
            candidates_for_ray((x, y), &ray, *phi1.phi.get(x, y), rig, depth, views, &mut set);
            let (k, conf) = phase_similarity_select(&mut set, others, cfg);
            out.confidence.set(x, y, conf);
            if k != UNDECIDED {
                out.k.set(x, y, k);
                out.mask.set(x, y, true);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigScale;
    use crate::Grid;

    fn set_with(phi1: f64, phases: &[f64]) -> (CandidateSet, Vec<WrappedPhase>) {
        // one 3×1 phase image per candidate; candidate i looks at pixel (1, 0)
        let others: Vec<WrappedPhase> = phases
            .iter()
            .map(|&p| WrappedPhase {
                phi: Grid::filled(3, 3, p),
                mask: Grid::filled(3, 3, true),
            })
            .collect();
        let candidates = (0..phases.len())
            .map(|i| Candidate {
                k: i as i32,
                point: Vector3::zeros(),
                pixels: vec![Some(Vector2::new(1.0, 1.0))],
                mismatch: f64::NAN,
                in_range: true,
            })
            .collect();
        (
            CandidateSet {
                pixel: (0, 0),
                phi1,
                candidates,
            },
            others,
        )
    }

    fn select_each(phi1: f64, phases: &[f64]) -> (i32, f64) {
        // evaluate each candidate against its own constant image
        let (mut set, others) = set_with(phi1, phases);
        let mut best = (UNDECIDED, f64::INFINITY);
        for (i, o) in others.iter().enumerate() {
            let mut single = CandidateSet {
                pixel: set.pixel,
                phi1,
                candidates: vec![set.candidates[i].clone()],
            };
            let (_, m) = phase_similarity_select(&mut single, &[o], &SpuConfig::default());
            set.candidates[i].mismatch = m;
            if m < best.1 {
                best = (i as i32, m);
            }
        }
        best
    }

    #[test]
    fn selects_closest_wrapped_phase() {
        let (k, conf) = select_each(0.25, &[-3.0, 0.2, 2.9]);
        assert_eq!(k, 1);
        assert!((conf - 0.05).abs() < 1e-12);
    }

    #[test]
    fn mismatch_wraps_around() {
        let (_, m) = select_each(-3.1, &[3.1]);
        assert!((m - (TAU - 6.2)).abs() < 1e-12, "{m}");
    }

    #[test]
    fn ties_and_rejections_are_undecided() {
        let img = |p: f64| WrappedPhase {
            phi: Grid::from_fn(4, 2, |x, _| if x < 2 { p } else { p + 0.03 }),
            mask: Grid::filled(4, 2, true),
        };
        let mk = |k: i32, x: f64| Candidate {
            k,
            point: Vector3::zeros(),
            pixels: vec![Some(Vector2::new(x, 0.0))],
            mismatch: f64::NAN,
            in_range: true,
        };
        let o = img(1.0);
        let mut set = CandidateSet {
            pixel: (0, 0),
            phi1: 1.0,
            candidates: vec![mk(0, 0.0), mk(1, 3.0)],
        };
        assert_eq!(phase_similarity_select(&mut set, &[&o], &SpuConfig::default()).0, UNDECIDED);
        let far = img(2.0);
        let mut set = CandidateSet {
            pixel: (0, 0),
            phi1: 1.0,
            candidates: vec![mk(0, 0.0)],
        };
        let (k, conf) = phase_similarity_select(&mut set, &[&far], &SpuConfig::default());
        assert_eq!(k, UNDECIDED);
        assert!((conf - 1.0).abs() < 1e-12);
        let mut none = CandidateSet {
            pixel: (0, 0),
            phi1: 1.0,
            candidates: vec![mk(0, 10.0)],
        };
        assert_eq!(phase_similarity_select(&mut none, &[&o], &SpuConfig::default()).0, UNDECIDED);
    }

    #[test]
    fn phasor_sampling_handles_wrap_and_borders() {
        // phase ramp crossing ±π between columns
        let ramp = |x: usize, y: usize| wrap_phase(2.8 + 0.3 * x as f64 + 0.1 * y as f64);
        let phase = WrappedPhase {
            phi: Grid::from_fn(8, 6, ramp),
            mask: Grid::filled(8, 6, true),
        };
        for &(u, v) in &[(1.5, 2.25), (0.0, 0.0), (6.9, 4.9), (7.3, 5.4), (-0.4, 3.0)] {
            let want = wrap_phase(2.8 + 0.3 * u + 0.1 * v);
            let got = sample_phase(&phase, &Vector2::new(u, v)).unwrap();
            assert!(wrap_phase(got - want).abs() < 2e-3, "({u},{v}) {got} {want}");
        }
        assert!(sample_phase(&phase, &Vector2::new(7.6, 1.0)).is_none());
        let mut masked = phase.clone();
        masked.mask = Grid::from_fn(8, 6, |x, _| x != 3);
        let got = sample_phase(&masked, &Vector2::new(3.2, 2.0)).unwrap();
        assert!(wrap_phase(got - wrap_phase(2.8 + 0.96 + 0.2)).abs() < 1e-9);
    }

    #[test]
    fn candidate_count_and_depth_filter() {
        let rig = Rig::synthetic(RigScale::Desk, 12);
        let full = DepthRange::Global {
            zmin: -1e6,
            zmax: 1e6,
        };
        let set = build_candidates((64, 48), 0.3, &rig, &full, 2).unwrap();
        assert_eq!(set.candidates.len(), 12);
        let zs: Vec<f64> = set.in_range().map(|c| c.point.z).collect();
        assert!(zs.len() >= 3);
        // pick a window that contains exactly one of the candidate depths
        let z = zs[zs.len() / 2];
        let narrow = DepthRange::Global {
            zmin: z - 1.0,
            zmax: z + 1.0,
        };
        let set = build_candidates((64, 48), 0.3, &rig, &narrow, 2).unwrap();
        assert_eq!(set.in_range().count(), 1);
        assert!(set.candidates.iter().filter(|c| !c.in_range).all(|c| c.pixels.is_empty()));
    }
}
