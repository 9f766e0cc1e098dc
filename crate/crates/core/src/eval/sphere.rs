use nalgebra::{DMatrix, DVector, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::simulator::SpherePairTruth;

const MIN_POINTS: usize = 10;
const GAUSS_NEWTON_ITERATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereFit {
    pub center: [f64; 3],
    pub radius: f64,
    /// RMS geometric residual (mm).
    pub rms: f64,
    pub inliers: usize,
    /// Condition number of the algebraic system; large for partial coverage.
    pub condition: f64,
}

impl SphereFit {
    pub fn center(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }
}

/// Algebraic least-squares sphere (on centred coordinates) refined by
/// Gauss–Newton on geometric distance.
pub fn fit_sphere(points: &[Vector3<f64>]) -> Result<SphereFit, EvalError> {
    if points.len() < MIN_POINTS {
        return Err(EvalError::TooFewPoints {
            needed: MIN_POINTS,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector3<f64>>() / n;
    let scale = (points.iter().map(|p| (p - mean).norm_squared()).sum::<f64>() / n).sqrt();
    if !(scale > 0.0) {
        return Err(EvalError::RankDeficient);
    }
    // |q|² = 2 c·q + d in normalized coordinates q = (p − mean)/scale
    let mut ata = Matrix4::zeros();
    let mut atb = Vector4::zeros();
    for p in points {
        let q = (p - mean) / scale;
        let row = Vector4::new(2.0 * q.x, 2.0 * q.y, 2.0 * q.z, 1.0);
        ata += row * row.transpose();
        atb += row * q.norm_squared();
    }
    let svd = ata.svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smin > 1e-12 * smax) {
        return Err(EvalError::RankDeficient);
    }
    let sol = svd.solve(&atb, 0.0).map_err(|_| EvalError::RankDeficient)?;
    let cq = Vector3::new(sol[0], sol[1], sol[2]);
    let r2 = sol[3] + cq.norm_squared();
    if !(r2 > 0.0) {
        return Err(EvalError::RankDeficient);
    }
    let mut c = mean + cq * scale;
    let mut r = r2.sqrt() * scale;

    for _ in 0..GAUSS_NEWTON_ITERATIONS {
        let mut j = DMatrix::zeros(points.len(), 4);
        let mut res = DVector::zeros(points.len());
        for (i, p) in points.iter().enumerate() {
            let d = p - c;
            let dist = d.norm();
            if dist == 0.0 {
                continue;
            }
            let u = d / dist;
            j[(i, 0)] = -u.x;
            j[(i, 1)] = -u.y;
            j[(i, 2)] = -u.z;
            j[(i, 3)] = -1.0;
            res[i] = dist - r;
        }
        let jt = j.transpose();
        let Some(step) = (&jt * &j).cholesky().map(|ch| ch.solve(&(-(&jt * &res)))) else {
            break;
        };
        c += Vector3::new(step[0], step[1], step[2]);
        r += step[3];
    }
    let rms = (points.iter().map(|p| ((p - c).norm() - r).powi(2)).sum::<f64>() / n).sqrt();
    Ok(SphereFit {
        center: c.into(),
        radius: r,
        rms,
        inliers: points.len(),
        condition: smax / smin,
    })
}

/// Fit, drop points whose residual is more than 3 robust standard deviations
/// (1.4826·MAD) from the median residual, and refit.
pub fn fit_sphere_trimmed(points: &[Vector3<f64>]) -> Result<SphereFit, EvalError> {
    let first = fit_sphere(points)?;
    let c = first.center();
    let res: Vec<f64> = points.iter().map(|p| (p - c).norm() - first.radius).collect();
    let med = median(&res);
    let dev: Vec<f64> = res.iter().map(|r| (r - med).abs()).collect();
    let sigma = 1.4826 * median(&dev);
    if sigma == 0.0 {
        return Ok(first);
    }
    let kept: Vec<Vector3<f64>> = points
        .iter()
        .zip(&res)
        .filter(|(_, r)| (*r - med).abs() <= 3.0 * sigma)
        .map(|(p, _)| *p)
        .collect();
    fit_sphere(&kept)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePairReport {
    pub fit1: SphereFit,
    pub fit2: SphereFit,
    pub r1: f64,
    pub r2: f64,
    pub center_distance: f64,
    /// Measured minus true (mm).
    pub r1_deviation: f64,
    pub r2_deviation: f64,
    pub distance_deviation: f64,
}

/// Fits two clouds and compares radii and centre distance with `truth`.
/// `truth_radii` must hold one radius per cloud.
pub fn sphere_pair_report(
    clouds: &[&[Vector3<f64>]],
    truth_radii: &[f64],
    truth_distance: f64,
    trim: bool,
) -> Result<SpherePairReport, EvalError> {
    if clouds.len() != 2 || truth_radii.len() != clouds.len() {
        return Err(EvalError::Mismatch(format!(
            "expected 2 clouds and 2 true radii, got {} and {}",
            clouds.len(),
            truth_radii.len()
        )));
    }
    let fit = |c: &[Vector3<f64>]| if trim { fit_sphere_trimmed(c) } else { fit_sphere(c) };
    let fit1 = fit(clouds[0])?;
    let fit2 = fit(clouds[1])?;
    let d = (fit1.center() - fit2.center()).norm();
    Ok(SpherePairReport {
        fit1,
        fit2,
        r1: fit1.radius,
        r2: fit2.radius,
        center_distance: d,
        r1_deviation: fit1.radius - truth_radii[0],
        r2_deviation: fit2.radius - truth_radii[1],
        distance_deviation: d - truth_distance,
    })
}

impl SpherePairReport {
    pub fn against(clouds: &[&[Vector3<f64>]], truth: &SpherePairTruth, trim: bool) -> Result<Self, EvalError> {
        sphere_pair_report(clouds, &[truth.radius1, truth.radius2], truth.center_distance, trim)
    }

    pub fn max_abs_deviation(&self) -> f64 {
        self.r1_deviation
            .abs()
            .max(self.r2_deviation.abs())
            .max(self.distance_deviation.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sample(c: Vector3<f64>, r: f64, n: usize, max_polar: f64, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let cz: f64 = rng.random_range(max_polar.cos()..1.0);
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let s = (1.0 - cz * cz).sqrt();
                c + r * Vector3::new(s * phi.cos(), s * phi.sin(), cz)
            })
            .collect()
    }

    #[test]
    fn exact_points() {
        let pts = sample(Vector3::new(10.0, -5.0, 30.0), 25.3989, 500, std::f64::consts::PI, 1);
        let f = fit_sphere(&pts).unwrap();
        assert!((f.radius - 25.3989).abs() < 1e-9);
        assert!(f.rms < 1e-9);
        assert_eq!(f.inliers, 500);
    }

    #[test]
    fn noisy_radius_error_bounded() {
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut errs: Vec<f64> = (0..100)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + t);
                let pts: Vec<_> = sample(Vector3::zeros(), 25.3989, 5000, std::f64::consts::PI, t)
                    .into_iter()
                    .map(|p| p + Vector3::from_fn(|_, _| noise.sample(&mut rng)))
                    .collect();
                (fit_sphere(&pts).unwrap().radius - 25.3989).abs()
            })
            .collect();
        errs.sort_by(|a, b| a.total_cmp(b));
        assert!(errs[98] < 0.02, "{}", errs[98]);
    }

    #[test]
    fn hemisphere_converges_with_worse_condition() {
        let full = fit_sphere(&sample(Vector3::zeros(), 25.0, 400, std::f64::consts::PI, 2)).unwrap();
        let cap = fit_sphere(&sample(Vector3::zeros(), 25.0, 400, 1.2, 2)).unwrap();
        assert!((cap.radius - 25.0).abs() < 1e-9);
        assert!(cap.condition > full.condition);
    }

    #[test]
    fn coplanar_points_rejected() {
        let pts: Vec<_> = (0..40)
            .map(|i| {
                let a = i as f64 * 0.3;
                Vector3::new(10.0 * a.cos(), 10.0 * a.sin(), 2.0)
            })
            .collect();
        assert_eq!(fit_sphere(&pts), Err(EvalError::RankDeficient));
        assert!(matches!(fit_sphere(&pts[..5]), Err(EvalError::TooFewPoints { .. })));
    }

    #[test]
    fn pair_report_and_trim() {
        let t = crate::simulator::SPHERE_PAIR_TRUTH;
        let c2 = Vector3::new(t.center_distance, 0.0, 0.0);
        let a = sample(Vector3::zeros(), t.radius1, 300, 1.5, 3);
        let mut b = sample(c2, t.radius2, 300, 1.5, 4);
        let r = SpherePairReport::against(&[&a, &b], &t, false).unwrap();
        assert!(r.max_abs_deviation() < 1e-9);
        // gross outliers are removed by the trimmed fit
        for p in b.iter_mut().take(6) {
            *p += Vector3::new(0.0, 0.0, 5.0);
        }
        let raw = SpherePairReport::against(&[&a, &b], &t, false).unwrap();
        let trimmed = SpherePairReport::against(&[&a, &b], &t, true).unwrap();
        assert!(trimmed.r2_deviation.abs() < 1e-9);
        assert!(raw.r2_deviation.abs() > 1e-3);
        assert!(sphere_pair_report(&[&a, &b], &[1.0], 1.0, false).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn rigid_invariance(ax in -1.0f64..1.0, ay in -1.0f64..1.0, angle in 0.0f64..3.0, t in -100.0f64..100.0) {
            let pts = sample(Vector3::new(1.0, 2.0, 3.0), 20.0, 200, 2.0, 9);
            let noisy: Vec<_> = pts.iter().enumerate()
                .map(|(i, p)| p + Vector3::new(0.0, 0.0, 0.01 * ((i * 7919) % 13) as f64 / 13.0))
                .collect();
            let tf = RigidTransform::from_axis_angle(Vector3::new(ax, ay, 0.5), angle, Vector3::new(t, -t, 0.5 * t));
            let moved: Vec<_> = noisy.iter().map(|p| tf.apply(p)).collect();
            let (a, b) = (fit_sphere(&noisy).unwrap(), fit_sphere(&moved).unwrap());
            prop_assert!((a.radius - b.radius).abs() < 1e-9);
            prop_assert!((a.rms - b.rms).abs() < 1e-9);
        }
    }
}
