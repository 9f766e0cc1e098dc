use nalgebra::{Vector2, Vector3};

use super::{CameraModel, GeometryError, ProjectorModel, Ray};

/// Minimum ray angle accepted by two-view triangulation (rad).
const MIN_RAY_ANGLE: f64 = 1e-6;

/// Intersects a camera ray with the projector plane at fringe-axis coordinate
/// `coord`; returns the point and its point-to-plane distance.
pub fn intersect_fringe_plane(
    ray: &Ray,
    coord: f64,
    proj: &ProjectorModel,
) -> Result<(Vector3<f64>, f64), GeometryError> {
    let (n, o) = proj.fringe_plane(coord);
    let denom = n.dot(&ray.direction);
    if denom.abs() < 1e-12 {
        return Err(GeometryError::DegenerateIntersection);
    }
    let s = n.dot(&(o - ray.origin)) / denom;
    if !(s > 0.0) {
        return Err(GeometryError::DegenerateIntersection);
    }
    let point = ray.at(s);
    Ok((point, n.dot(&(point - o)).abs()))
}

/// Camera–projector triangulation of a pixel with a known projector coordinate.
pub fn triangulate_camera_projector(
    pixel: &Vector2<f64>,
    cam: &CameraModel,
    coord: f64,
    proj: &ProjectorModel,
) -> Result<(Vector3<f64>, f64), GeometryError> {
    let ray = cam.backproject_ray(pixel)?;
    intersect_fringe_plane(&ray, coord, proj)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoViewPoint {
    pub point: Vector3<f64>,
    /// Mean reprojection error over both views (px).
    pub residual: f64,
}

/// Closest points of two rays; `None` when they are near-parallel.
pub(crate) fn ray_midpoint(r1: &Ray, r2: &Ray) -> Option<Vector3<f64>> {
    let sin = r1.direction.cross(&r2.direction).norm();
    if sin < MIN_RAY_ANGLE {
        return None;
    }
    let w0 = r1.origin - r2.origin;
    let b = r1.direction.dot(&r2.direction);
    let d = r1.direction.dot(&w0);
    let e = r2.direction.dot(&w0);
    let denom = 1.0 - b * b;
    let s = (b * e - d) / denom;
    let t = (e - b * d) / denom;
    Some((r1.at(s) + r2.at(t)) * 0.5)
}

/// Midpoint triangulation of a correspondence between two calibrated cameras.
pub fn triangulate_two_view(
    p1: &Vector2<f64>,
    cam1: &CameraModel,
    p2: &Vector2<f64>,
    cam2: &CameraModel,
) -> Result<TwoViewPoint, GeometryError> {
    let r1 = cam1.backproject_ray(p1)?;
    let r2 = cam2.backproject_ray(p2)?;
    let point = ray_midpoint(&r1, &r2).ok_or(GeometryError::DegenerateBaseline)?;
    let e1 = (cam1.project(&point)? - p1).norm();
    let e2 = (cam2.project(&point)? - p2).norm();
    Ok(TwoViewPoint {
        point,
        residual: 0.5 * (e1 + e2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Distortion, FringeAxis, Intrinsics, Rig, RigScale, RigidTransform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn pinhole(center_x: f64) -> CameraModel {
        CameraModel::new(
            Intrinsics {
                fx: 500.0,
                fy: 500.0,
                cx: 320.0,
                cy: 240.0,
            },
            Distortion::default(),
            640,
            480,
            RigidTransform {
                rotation: nalgebra::Matrix3::identity(),
                translation: Vector3::new(-center_x, 0.0, 0.0),
            },
        )
        .unwrap()
    }

    #[test]
    fn rectified_disparity_depth() {
        let c1 = pinhole(0.0);
        let c2 = pinhole(100.0);
        // z = f·b/d = 500·100/5
        let tv = triangulate_two_view(
            &Vector2::new(325.0, 240.0),
            &c1,
            &Vector2::new(320.0, 240.0),
            &c2,
        )
        .unwrap();
        assert!((tv.point.z - 10_000.0).abs() < 1e-6, "{}", tv.point.z);
        assert!(tv.residual < 1e-9);
    }

    #[test]
    fn parallel_rays_degenerate() {
        let c1 = pinhole(0.0);
        let c2 = pinhole(100.0);
        let r = triangulate_two_view(
            &Vector2::new(320.0, 240.0),
            &c1,
            &Vector2::new(320.0, 240.0),
            &c2,
        );
        assert_eq!(r, Err(GeometryError::DegenerateBaseline));
    }

    #[test]
    fn two_view_recovers_random_points() {
        let rig = Rig::synthetic(RigScale::Paper, 48);
        let (c1, c2) = (&rig.cameras[0], &rig.cameras[1]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut n = 0;
        while n < 1000 {
            let p = Vector3::new(
                rng.random_range(-90.0..90.0),
                rng.random_range(-70.0..70.0),
                rng.random_range(-100.0..150.0),
            );
            let (q1, q2) = (c1.project(&p).unwrap(), c2.project(&p).unwrap());
            if !c1.contains(&q1) || !c2.contains(&q2) {
                continue;
            }
            let tv = triangulate_two_view(&q1, c1, &q2, c2).unwrap();
            assert!((tv.point - p).norm() < 1e-6, "{:?} vs {:?}", tv.point, p);
            assert!(tv.residual < 1e-6);
            n += 1;
        }
    }

    #[test]
    fn depth_error_grows_quadratically_with_depth() {
        // Monte-Carlo: rectified pair, σ = 0.1 px on both views.
        let c1 = pinhole(0.0);
        let c2 = pinhole(100.0);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let depths = [1000.0, 2000.0, 4000.0];
        let mut medians = Vec::new();
        for &z in &depths {
            let p = Vector3::new(20.0, -10.0, z);
            let (q1, q2) = (c1.project(&p).unwrap(), c2.project(&p).unwrap());
            let mut errs: Vec<f64> = (0..4000)
                .map(|_| {
                    let n1 = Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                    let n2 = Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                    let tv = triangulate_two_view(&(q1 + n1), &c1, &(q2 + n2), &c2).unwrap();
                    (tv.point.z - z).abs()
                })
                .collect();
            errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(errs[errs.len() / 2] / (z * z));
        }
        // median error / z² constant within Monte-Carlo scatter
        let mean = medians.iter().sum::<f64>() / 3.0;
        for m in &medians {
            assert!((m / mean - 1.0).abs() < 0.15, "{medians:?}");
        }
    }

    fn rectified_projector() -> ProjectorModel {
        let lens = CameraModel::new(
            Intrinsics {
                fx: 400.0,
                fy: 400.0,
                cx: 96.0,
                cy: 120.0,
            },
            Distortion::default(),
            192,
            240,
            RigidTransform {
                rotation: nalgebra::Matrix3::identity(),
                translation: Vector3::new(-120.0, 0.0, 0.0),
            },
        )
        .unwrap();
        ProjectorModel::new(lens, FringeAxis::Columns, 12).unwrap()
    }

    #[test]
    fn flat_plane_camera_projector() {
        let cam = pinhole(0.0);
        let proj = rectified_projector();
        for v in (0..480).step_by(37) {
            for u in (0..640).step_by(41) {
                let px = Vector2::new(u as f64, v as f64);
                let ray = cam.backproject_ray(&px).unwrap();
                let p = ray.at(500.0 / ray.direction.z);
                let Some(coord) = proj.illuminated_coordinate(&p) else {
                    continue;
                };
                let (x, res) = triangulate_camera_projector(&px, &cam, coord, &proj).unwrap();
                assert!((x.z - 500.0).abs() < 1e-6);
                assert!(res < 1e-9);
            }
        }
    }

    #[test]
    fn projector_coordinate_shift_moves_depth_monotonically() {
        let cam = pinhole(0.0);
        let proj = rectified_projector();
        let px = Vector2::new(300.0, 200.0);
        let depths: Vec<f64> = (0..60)
            .map(|i| {
                let coord = 20.0 + i as f64 * 0.95;
                triangulate_camera_projector(&px, &cam, coord, &proj).unwrap().0.z
            })
            .collect();
        // projector sits at +x of the camera: larger columns push the point away
        assert!(depths.windows(2).all(|w| w[1] > w[0]), "{depths:?}");
    }

    #[test]
    fn ray_parallel_to_plane_is_degenerate() {
        let proj = rectified_projector();
        let (n, _) = proj.fringe_plane(50.0);
        let dir = n.cross(&Vector3::y()).normalize();
        let ray = Ray::new(Vector3::new(0.0, 0.0, 0.0), dir);
        assert_eq!(
            intersect_fringe_plane(&ray, 50.0, &proj),
            Err(GeometryError::DegenerateIntersection)
        );
    }
}
