//! Fourier-transform (single fringe image) phase retrieval.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::PhaseError;
use crate::{Grid, Mask};

/// Fringe carrier frequency in cycles/pixel along image x and y. The sign
/// gives the direction in which phase increases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Carrier {
    pub fx: f64,
    pub fy: f64,
}

impl Carrier {
    pub fn magnitude(&self) -> f64 {
        self.fx.hypot(self.fy)
    }
}

fn fft2(data: &mut [Complex64], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for r in data.chunks_exact_mut(w) {
        row.process(r);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
    if inverse {
        let s = 1.0 / (w * h) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Signed frequency of FFT bin `i` of an `n`-point transform, cycles/sample.
fn bin_freq(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64 / n as f64
    } else {
        i as f64 / n as f64 - 1.0
    }
}

fn spectrum(image: &Grid<f64>) -> Vec<Complex64> {
    let mean = image.as_slice().iter().sum::<f64>() / image.len() as f64;
    let mut data: Vec<Complex64> = image
        .as_slice()
        .iter()
        .map(|&v| Complex64::new(v - mean, 0.0))
        .collect();
    fft2(&mut data, image.width(), image.height(), false);
    data
}

fn peak_carrier(spec: &[Complex64], w: usize, h: usize) -> Result<Carrier, PhaseError> {
    let mut best = (0.0, 0usize);
    let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (bin_freq(x, w), bin_freq(y, h));
            // one half-plane: the other lobe is the conjugate
            if fx < 0.0 || (fx == 0.0 && fy <= 0.0) {
                continue;
            }
            let p = spec[y * w + x].norm_sqr();
            if p > best.0 {
                best = (p, y * w + x);
            }
        }
    }
    if !(best.0 > 1e-12 * total.max(1e-300)) || total < 1e-20 {
        return Err(PhaseError::CarrierTooLow);
    }
    let (bx, by) = (best.1 % w, best.1 / w);
    let (ix, iy) = (bin_freq(bx, w) * w as f64, bin_freq(by, h) * h as f64);
    if ix.hypot(iy) < 2.0 {
        return Err(PhaseError::CarrierTooLow);
    }
    Ok(Carrier {
        fx: bin_freq(bx, w),
        fy: bin_freq(by, h),
    })
}

/// Dominant non-DC spectral peak, taken in the half-plane `fx ≥ 0`.
pub fn estimate_carrier(image: &Grid<f64>) -> Result<Carrier, PhaseError> {
    let spec = spectrum(image);
    peak_carrier(&spec, image.width(), image.height())
}

/// Single-image phase retrieval by carrier demodulation.
///
/// The fundamental lobe is isolated with a raised-cosine window of radius
/// `|f_c|/2` around the carrier, inverse transformed, and the angle of the
/// resulting analytic signal is the wrapped phase (carrier retained). A
/// border band of one carrier period and pixels with weak analytic signal
/// are masked out.
pub fn ft_wrapped_phase(
    image: &Grid<f64>,
    carrier: Option<Carrier>,
    threshold: f64,
) -> Result<(Grid<f64>, Mask), PhaseError> {
    let (w, h) = image.dims();
    let mut spec = spectrum(image);
    let estimated = peak_carrier(&spec, w, h);
    let c = match carrier {
        Some(c) => {
            if (c.fx * w as f64).hypot(c.fy * h as f64) < 2.0 {
                return Err(PhaseError::CarrierTooLow);
            }
            // a flat image has no lobe to demodulate whatever the carrier
            estimated?;
            c
        }
        None => estimated?,
    };
    let radius = c.magnitude() / 2.0;
    for y in 0..h {
        for x in 0..w {
            let r = (bin_freq(x, w) - c.fx).hypot(bin_freq(y, h) - c.fy);
            let g = if r < radius {
                0.5 * (1.0 + (PI * r / radius).cos())
            } else {
                0.0
            };
            spec[y * w + x] *= g;
        }
    }
    fft2(&mut spec, w, h, true);
    let border = (1.0 / c.magnitude()).ceil() as usize;
    let phi = Grid::from_fn(w, h, |x, y| crate::wrap_phase(spec[y * w + x].arg()));
    let mask = Grid::from_fn(w, h, |x, y| {
        x >= border
            && y >= border
            && x + border < w
            && y + border < h
            && 2.0 * spec[y * w + x].norm() >= threshold
    });
    Ok((phi, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wrap_phase;
    use std::f64::consts::TAU;

    fn fringe(w: usize, h: usize, fx: f64, fy: f64) -> (Grid<f64>, Grid<f64>) {
        let phase = Grid::from_fn(w, h, |x, y| {
            TAU * (fx * x as f64 + fy * y as f64) + 0.3 * ((x as f64) / 40.0).sin()
        });
        (phase.map(|&p| 0.5 + 0.25 * p.cos()), phase)
    }

    #[test]
    fn linear_carrier_interior_accuracy() {
        let (img, phase) = fringe(128, 96, 1.0 / 12.0, 0.01);
        let c = estimate_carrier(&img).unwrap();
        assert!((c.fx - 1.0 / 12.0).abs() < 0.01, "{c:?}");
        let (phi, mask) = ft_wrapped_phase(&img, None, 0.02).unwrap();
        let mut worst: f64 = 0.0;
        for (x, y, &m) in mask.indexed() {
            if m && x > 16 && x < 112 && y > 16 && y < 80 {
                worst = worst.max(wrap_phase(phi.get(x, y) - phase.get(x, y)).abs());
            }
        }
        assert!(worst < 0.05, "{worst}");
        assert!(mask.count() > 0);
        assert!(!mask.get(0, 0));
    }

    #[test]
    fn flat_image_has_no_carrier() {
        let img = Grid::filled(64, 64, 0.5);
        assert_eq!(estimate_carrier(&img), Err(PhaseError::CarrierTooLow));
        assert_eq!(
            ft_wrapped_phase(&img, None, 0.02).unwrap_err(),
            PhaseError::CarrierTooLow
        );
        assert_eq!(
            ft_wrapped_phase(&img, Some(Carrier { fx: 0.1, fy: 0.0 }), 0.02).unwrap_err(),
            PhaseError::CarrierTooLow
        );
    }

    #[test]
    fn low_carrier_rejected() {
        let (img, _) = fringe(64, 64, 1.0 / 64.0, 0.0);
        assert_eq!(estimate_carrier(&img), Err(PhaseError::CarrierTooLow));
    }

    #[test]
    fn fft_roundtrip() {
        let g = Grid::from_fn(12, 10, |x, y| (x * 7 + y * 3) as f64 % 5.0);
        let mut d: Vec<Complex64> = g.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft2(&mut d, 12, 10, false);
        fft2(&mut d, 12, 10, true);
        for (a, b) in d.iter().zip(g.as_slice()) {
            assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }
}
