//! Accuracy metrics: sphere fitting, fringe-order error rates, phase and
//! depth error maps, and the JSON report.

mod sphere;

pub use sphere::{fit_sphere, fit_sphere_trimmed, sphere_pair_report, SphereFit, SpherePairReport};

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::unwrap::{OrderMap, WrappedPhase, UNDECIDED};
use crate::{wrap_phase, Grid, Mask};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("rank deficient")]
    RankDeficient,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("empty mask")]
    EmptyMask,
    #[error("{0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderErrorReport {
    /// Wrong orders among decided pixels of the joint mask (0 if none decided).
    pub rate: f64,
    pub wrong: usize,
    pub decided: usize,
    /// Pixels of the truth mask the prediction left undecided, as a fraction.
    pub undecided_fraction: f64,
    pub total: usize,
}

/// Compares predicted orders with reference orders on the reference mask.
pub fn order_error_rate(pred: &OrderMap, truth: &OrderMap) -> Result<OrderErrorReport, EvalError> {
    if !pred.k.same_dims(&truth.k) {
        return Err(EvalError::Mismatch("order maps differ in size".into()));
    }
    let (mut wrong, mut decided, mut total) = (0, 0, 0);
    for i in 0..truth.k.len() {
        if !truth.mask.as_slice()[i] {
            continue;
        }
        total += 1;
        let k = pred.k.as_slice()[i];
        if !pred.mask.as_slice()[i] || k == UNDECIDED {
            continue;
        }
        decided += 1;
        if k != truth.k.as_slice()[i] {
            wrong += 1;
        }
    }
    if total == 0 {
        return Err(EvalError::EmptyMask);
    }
    Ok(OrderErrorReport {
        rate: if decided > 0 { wrong as f64 / decided as f64 } else { 0.0 },
        wrong,
        decided,
        undecided_fraction: (total - decided) as f64 / total as f64,
        total,
    })
}

/// Orders that make a measured wrapped phase land closest to the true
/// absolute phase: `round((Φ_true − φ̂)/2π)`. Near a wrap boundary noise can
/// push `φ̂` across ±π, in which case the correct order for the measurement
/// differs from the noise-free one; this is the reference to score noisy
/// unwrapping against.
pub fn effective_orders(truth_abs: &Grid<f64>, truth_mask: &Mask, measured: &WrappedPhase) -> OrderMap {
    let k = Grid::from_fn(truth_abs.width(), truth_abs.height(), |x, y| {
        if *truth_mask.get(x, y) && *measured.mask.get(x, y) {
            ((truth_abs.get(x, y) - measured.phi.get(x, y)) / TAU).round() as i32
        } else {
            UNDECIDED
        }
    });
    let mask = k.map(|&k| k != UNDECIDED);
    OrderMap::from_orders(k, &mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDepthErrors {
    pub phase_rmse: f64,
    /// NaN when no pixel has finite depth in both maps.
    pub depth_rmse: f64,
    pub phase_count: usize,
    pub depth_count: usize,
    /// Signed `pred − truth`; 0 outside the mask.
    pub phase_error: Grid<f64>,
    /// Signed `pred − truth` (mm); NaN where undefined.
    pub depth_error: Grid<f64>,
}

pub fn phase_and_depth_errors(
    pred_phase: &Grid<f64>,
    truth_phase: &Grid<f64>,
    pred_depth: &Grid<f64>,
    truth_depth: &Grid<f64>,
    mask: &Mask,
) -> Result<PhaseDepthErrors, EvalError> {
    if !(pred_phase.same_dims(truth_phase) && pred_depth.same_dims(truth_depth) && mask.same_dims(pred_phase)) {
        return Err(EvalError::Mismatch("error maps differ in size".into()));
    }
    let n = mask.count();
    if n == 0 {
        return Err(EvalError::EmptyMask);
    }
    let phase_error = Grid::from_fn(mask.width(), mask.height(), |x, y| {
        if *mask.get(x, y) {
            pred_phase.get(x, y) - truth_phase.get(x, y)
        } else {
            0.0
        }
    });
    let depth_error = Grid::from_fn(mask.width(), mask.height(), |x, y| {
        if *mask.get(x, y) {
            pred_depth.get(x, y) - truth_depth.get(x, y)
        } else {
            f64::NAN
        }
    });
    let phase_rmse = (phase_error.as_slice().iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
    let finite: Vec<f64> = depth_error.as_slice().iter().copied().filter(|e| e.is_finite()).collect();
    let depth_rmse = if finite.is_empty() {
        f64::NAN
    } else {
        (finite.iter().map(|e| e * e).sum::<f64>() / finite.len() as f64).sqrt()
    };
    Ok(PhaseDepthErrors {
        phase_rmse,
        depth_rmse,
        phase_count: n,
        depth_count: finite.len(),
        phase_error,
        depth_error,
    })
}

/// RMS of `wrap(pred − truth)` over the mask.
pub fn wrapped_phase_rmse(pred: &Grid<f64>, truth: &Grid<f64>, mask: &Mask) -> Result<f64, EvalError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((p, t), &m) in pred.as_slice().iter().zip(truth.as_slice()).zip(mask.as_slice()) {
        if m {
            sum += wrap_phase(p - t).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::EmptyMask);
    }
    Ok((sum / n as f64).sqrt())
}

/// Summary written by `evaluate` and the pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orders: Option<OrderErrorReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrapped_phase_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spheres: Option<SpherePairReport>,
    /// Pixels whose true absolute phase is more than π from the reference
    /// plane's (where reference unwrapping cannot succeed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_band_violations: Option<usize>,
    /// Error-map files relative to the report.
    #[serde(default)]
    pub maps: BTreeMap<String, String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?).map_err(std::io::Error::other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn orders(k: Vec<i32>) -> OrderMap {
        let n = k.len();
        let g = Grid::from_vec(n, 1, k);
        let mask = g.map(|&k| k >= 0);
        OrderMap::from_orders(g, &mask)
    }

    #[test]
    fn order_rate_examples() {
        let truth = orders((0..1000).map(|i| i % 12).collect());
        let r = order_error_rate(&truth, &truth).unwrap();
        assert_eq!((r.rate, r.undecided_fraction), (0.0, 0.0));
        let none = orders(vec![-1; 1000]);
        let r = order_error_rate(&none, &truth).unwrap();
        assert_eq!((r.rate, r.undecided_fraction), (0.0, 1.0));
        let mut k: Vec<i32> = (0..1000).map(|i| i % 12).collect();
        k[17] += 1;
        let r = order_error_rate(&orders(k), &truth).unwrap();
        assert!((r.rate - 0.001).abs() < 1e-15);
        assert_eq!(order_error_rate(&truth, &orders(vec![-1; 1000])), Err(EvalError::EmptyMask));
    }

    #[test]
    fn phase_depth_examples() {
        let t = Grid::from_fn(10, 10, |x, y| (x + y) as f64);
        let m = Grid::filled(10, 10, true);
        let e = phase_and_depth_errors(&t, &t, &t, &t, &m).unwrap();
        assert_eq!((e.phase_rmse, e.depth_rmse), (0.0, 0.0));
        let shifted = t.map(|v| v + TAU);
        let e = phase_and_depth_errors(&shifted, &t, &t, &t, &m).unwrap();
        assert!((e.phase_rmse - TAU).abs() < 1e-12);
        // one order added on 1% of pixels
        let mut one = t.clone();
        *one.get_mut(3, 3) += TAU;
        let e = phase_and_depth_errors(&one, &t, &t, &t, &m).unwrap();
        assert!((e.phase_rmse - TAU * 0.01f64.sqrt()).abs() < 1e-12);
        let empty = Grid::filled(10, 10, false);
        assert_eq!(phase_and_depth_errors(&t, &t, &t, &t, &empty), Err(EvalError::EmptyMask));
    }

    #[test]
    fn effective_orders_follow_the_measurement() {
        let truth = Grid::from_vec(2, 1, vec![TAU * 3.0 + 3.1, TAU * 3.0 + 3.1]);
        let mask = Grid::filled(2, 1, true);
        let measured = WrappedPhase {
            phi: Grid::from_vec(2, 1, vec![3.1, -3.1]),
            mask: mask.clone(),
        };
        let k = effective_orders(&truth, &mask, &measured);
        assert_eq!(k.k.as_slice(), &[3, 4]);
    }

    #[test]
    fn report_roundtrip() {
        let mut r = EvalReport {
            orders: Some(OrderErrorReport {
                rate: 0.125,
                wrong: 1,
                decided: 8,
                undecided_fraction: 0.2,
                total: 10,
            }),
            phase_rmse: Some(0.1 + 0.2),
            depth_rmse: Some(1.0 / 3.0),
            ..Default::default()
        };
        r.maps.insert("phase_error".into(), "phase_error.fpi".into());
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
    }

    proptest! {
        #[test]
        fn flips_increase_error_count(flips in proptest::collection::btree_set(0usize..200, 0..50)) {
            let base: Vec<i32> = (0..200).map(|i| (i % 7) as i32).collect();
            let truth = orders(base.clone());
            let mut k = base.clone();
            let mut prev = 0;
            for (n, &i) in flips.iter().enumerate() {
                k[i] += 1;
                let r = order_error_rate(&orders(k.clone()), &truth).unwrap();
                prop_assert_eq!(r.wrong, n + 1);
                prop_assert!(r.wrong > prev);
                prev = r.wrong;
            }
        }
    }
}
