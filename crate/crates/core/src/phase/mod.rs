//! Wrapped-phase retrieval: N-step phase shifting and the Fourier-transform
//! single-shot baseline.
//!
//! For `I_n = A + B cos(Φ + 2πn/N)` the least-squares sums are
//! `M = Σ I_n sin(2πn/N) = −(N B / 2) sin Φ` and
//! `D = Σ I_n cos(2πn/N) = (N B / 2) cos Φ`, so `atan2(−M, D)` is `Φ`
//! wrapped into `(−π, π]`.

mod ft;

pub use ft::{estimate_carrier, ft_wrapped_phase, Carrier};

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::FringeStack;
use crate::{wrap_phase, Grid, Mask};

pub const DEFAULT_MODULATION_THRESHOLD: f64 = 0.02;

#[derive(Debug, Error, PartialEq)]
pub enum PhaseError {
    #[error("need at least 3 phase steps, got {0}")]
    TooFewSteps(usize),
    #[error("image dimensions differ within the stack")]
    DimensionMismatch,
    #[error("carrier too low")]
    CarrierTooLow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMaps {
    pub m: Grid<f64>,
    pub d: Grid<f64>,
    pub phi: Grid<f64>,
    pub b_mod: Grid<f64>,
    pub mask: Mask,
}

/// Per-pixel `M = Σ I_n sin(2πn/N)` and `D = Σ I_n cos(2πn/N)`.
pub fn ps_numerator_denominator(
    images: &[Grid<f64>],
) -> Result<(Grid<f64>, Grid<f64>), PhaseError> {
    let n = images.len();
    if n < 3 {
        return Err(PhaseError::TooFewSteps(n));
    }
    if images.iter().any(|im| !im.same_dims(&images[0])) {
        return Err(PhaseError::DimensionMismatch);
    }
    let (w, h) = images[0].dims();
    let mut m = Grid::filled(w, h, 0.0);
    let mut d = Grid::filled(w, h, 0.0);
    for (i, im) in images.iter().enumerate() {
        let (s, c) = (TAU * i as f64 / n as f64).sin_cos();
        for ((mv, dv), &v) in m
            .as_mut_slice()
            .iter_mut()
            .zip(d.as_mut_slice())
            .zip(im.as_slice())
        {
            *mv += v * s;
            *dv += v * c;
        }
    }
    Ok((m, d))
}

/// Wrapped phase `atan2(−M, D)` and a validity map (false where `M = D = 0`).
pub fn wrapped_phase(m: &Grid<f64>, d: &Grid<f64>) -> (Grid<f64>, Mask) {
    let phi = m.zip_map(d, |&m, &d| {
        if m == 0.0 && d == 0.0 {
            0.0
        } else {
            // atan2 returns −π for (−0.0, negative); fold onto +π
            wrap_phase((-m).atan2(d))
        }
    });
    let valid = m.zip_map(d, |&m, &d| !(m == 0.0 && d == 0.0));
    (phi, valid)
}

/// Fringe modulation `(2/N)·√(M² + D²)` and the mask `B_mod ≥ threshold`.
pub fn modulation(m: &Grid<f64>, d: &Grid<f64>, steps: usize, threshold: f64) -> (Grid<f64>, Mask) {
    let scale = 2.0 / steps as f64;
    let b = m.zip_map(d, |&m, &d| scale * m.hypot(d));
    let mask = b.map(|&v| v >= threshold && v > 0.0);
    (b, mask)
}

/// Full N-step retrieval of a stack.
pub fn retrieve_ps(stack: &FringeStack, threshold: f64) -> Result<PhaseMaps, PhaseError> {
    retrieve_ps_images(&stack.images, threshold)
}

pub fn retrieve_ps_images(images: &[Grid<f64>], threshold: f64) -> Result<PhaseMaps, PhaseError> {
    let (m, d) = ps_numerator_denominator(images)?;
    let (phi, valid) = wrapped_phase(&m, &d);
    let (b_mod, bmask) = modulation(&m, &d, images.len(), threshold);
    Ok(PhaseMaps {
        mask: valid.and(&bmask),
        m,
        d,
        phi,
        b_mod,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pixel_stack(a: f64, b: f64, phase: f64, n: usize) -> Vec<Grid<f64>> {
        (0..n)
            .map(|i| Grid::filled(1, 1, a + b * (phase + TAU * i as f64 / n as f64).cos()))
            .collect()
    }

    #[test]
    fn three_step_closed_form() {
        let s = pixel_stack(0.5, 0.25, 0.0, 3);
        let v: Vec<f64> = s.iter().map(|g| g.as_slice()[0]).collect();
        assert!((v[0] - 0.75).abs() < 1e-15);
        assert!((v[1] - 0.375).abs() < 1e-15 && (v[2] - 0.375).abs() < 1e-15);
        let (m, d) = ps_numerator_denominator(&s).unwrap();
        assert!(m.as_slice()[0].abs() < 1e-15);
        assert!((d.as_slice()[0] - 0.375).abs() < 1e-15);

        let (m, d) = ps_numerator_denominator(&pixel_stack(0.5, 0.25, PI / 2.0, 3)).unwrap();
        assert!((m.as_slice()[0] + 0.375).abs() < 1e-15);
        assert!(d.as_slice()[0].abs() < 1e-15);
        let (b, mask) = modulation(&m, &d, 3, DEFAULT_MODULATION_THRESHOLD);
        assert!((b.as_slice()[0] - 0.25).abs() < 1e-15);
        assert!(mask.as_slice()[0]);
    }

    #[test]
    fn wrapped_phase_examples() {
        let g = |v: f64| Grid::filled(1, 1, v);
        let (phi, ok) = wrapped_phase(&g(0.0), &g(0.375));
        assert_eq!((phi.as_slice()[0], ok.as_slice()[0]), (0.0, true));
        let (phi, _) = wrapped_phase(&g(-0.375), &g(0.0));
        assert!((phi.as_slice()[0] - PI / 2.0).abs() < 1e-15);
        let (phi, ok) = wrapped_phase(&g(0.0), &g(0.0));
        assert_eq!((phi.as_slice()[0], ok.as_slice()[0]), (0.0, false));
        let (phi, _) = wrapped_phase(&g(0.0), &g(-1.0));
        assert_eq!(phi.as_slice()[0], PI);
        let (phi, _) = wrapped_phase(&g(-0.0), &g(-1.0));
        assert_eq!(phi.as_slice()[0], PI);
    }

    #[test]
    fn flat_images_have_no_signal() {
        let s: Vec<_> = (0..4).map(|_| Grid::filled(3, 2, 0.4)).collect();
        let maps = retrieve_ps_images(&s, DEFAULT_MODULATION_THRESHOLD).unwrap();
        assert!(maps.m.as_slice().iter().all(|v| v.abs() < 1e-15));
        assert!(maps.d.as_slice().iter().all(|v| v.abs() < 1e-15));
        assert_eq!(maps.mask.count(), 0);
    }

    #[test]
    fn errors() {
        let s: Vec<_> = (0..2).map(|_| Grid::filled(3, 2, 0.4)).collect();
        assert_eq!(ps_numerator_denominator(&s), Err(PhaseError::TooFewSteps(2)));
        let s = vec![Grid::filled(3, 2, 0.4), Grid::filled(3, 2, 0.4), Grid::filled(2, 2, 0.4)];
        assert_eq!(ps_numerator_denominator(&s), Err(PhaseError::DimensionMismatch));
    }

    proptest::proptest! {
        #[test]
        fn recovers_phase_shift_and_scale(
            phase in -PI + 1e-6..PI,
            delta in -PI..PI,
            scale in 0.1f64..5.0,
            n in 3usize..13,
        ) {
            let base = pixel_stack(0.5, 0.3, phase, n);
            let (m, d) = ps_numerator_denominator(&base).unwrap();
            let (phi, _) = wrapped_phase(&m, &d);
            proptest::prop_assert!(wrap_phase(phi.as_slice()[0] - phase).abs() < 1e-12);

            let shifted = pixel_stack(0.5, 0.3, phase + delta, n);
            let (m2, d2) = ps_numerator_denominator(&shifted).unwrap();
            let (phi2, _) = wrapped_phase(&m2, &d2);
            proptest::prop_assert!(
                wrap_phase(phi2.as_slice()[0] - phi.as_slice()[0] - delta).abs() < 1e-12
            );

            let scaled: Vec<_> = base.iter().map(|g| g.map(|v| v * scale)).collect();
            let (m3, d3) = ps_numerator_denominator(&scaled).unwrap();
            let (phi3, _) = wrapped_phase(&m3, &d3);
            proptest::prop_assert!(wrap_phase(phi3.as_slice()[0] - phi.as_slice()[0]).abs() < 1e-12);
            let (b, _) = modulation(&m3, &d3, n, 0.0);
            let (b0, _) = modulation(&m, &d, n, 0.0);
            proptest::prop_assert!((b.as_slice()[0] - scale * b0.as_slice()[0]).abs() < 1e-12);
        }
    }
}
