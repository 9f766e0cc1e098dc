use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, RigidTransform};

const UNDISTORT_MAX_ITERS: usize = 20;
const UNDISTORT_STEP_TOL_PX: f64 = 1e-12;
const UNDISTORT_RESIDUAL_TOL_PX: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Brown–Conrady radial (`k1..k3`) and tangential (`p1, p2`) coefficients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Distortion {
    pub fn is_zero(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.k3 == 0.0 && self.p1 == 0.0 && self.p2 == 0.0
    }

    /// Maps undistorted normalized coordinates to distorted ones.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xy = x * y;
        let dx = 2.0 * self.p1 * xy + self.p2 * (r2 + 2.0 * x * x);
        let dy = self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * xy;
        (x * radial + dx, y * radial + dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Unit length.
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    #[inline]
    pub fn at(&self, s: f64) -> Vector3<f64> {
        self.origin + self.direction * s
    }
}

/// Pinhole camera with lens distortion and a world→camera pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub intrinsics: Intrinsics,
    pub distortion: Distortion,
    pub width: usize,
    pub height: usize,
    pub pose: RigidTransform,
}

impl CameraModel {
    pub fn new(
        intrinsics: Intrinsics,
        distortion: Distortion,
        width: usize,
        height: usize,
        pose: RigidTransform,
    ) -> Result<Self, GeometryError> {
        let cam = Self {
            intrinsics,
            distortion,
            width,
            height,
            pose,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let Intrinsics { fx, fy, cx, cy } = self.intrinsics;
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::InvalidModel(
                "focal lengths must be positive".into(),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidModel("empty sensor".into()));
        }
        if !(cx >= 0.0 && cx < self.width as f64 && cy >= 0.0 && cy < self.height as f64) {
            return Err(GeometryError::InvalidModel(
                "principal point outside sensor".into(),
            ));
        }
        let d = self.distortion;
        if ![d.k1, d.k2, d.k3, d.p1, d.p2].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidModel(
                "non-finite distortion coefficient".into(),
            ));
        }
        self.pose.validate()
    }

    /// Optical centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.pose.rotation.transpose() * self.pose.translation)
    }

    /// World point to fractional pixel coordinates, distortion included.
    /// The result may lie outside the sensor.
    pub fn project(&self, point: &Vector3<f64>) -> Result<Vector2<f64>, GeometryError> {
        let pc = self.pose.apply(point);
        if !(pc.z > 0.0) {
            return Err(GeometryError::BehindCamera);
        }
        let (xd, yd) = self.distortion.apply(pc.x / pc.z, pc.y / pc.z);
        Ok(self.to_pixel(xd, yd))
    }

    #[inline]
    pub fn to_pixel(&self, xd: f64, yd: f64) -> Vector2<f64> {
        let k = &self.intrinsics;
        Vector2::new(k.fx * xd + k.cx, k.fy * yd + k.cy)
    }

    /// Undistorted normalized coordinates of a pixel (fixed-point inversion).
    pub fn undistort(&self, pixel: &Vector2<f64>) -> Result<(f64, f64), GeometryError> {
        let k = &self.intrinsics;
        let xd = (pixel.x - k.cx) / k.fx;
        let yd = (pixel.y - k.cy) / k.fy;
        let d = &self.distortion;
        if d.is_zero() {
            return Ok((xd, yd));
        }
        let scale = k.fx.max(k.fy);
        let (mut x, mut y) = (xd, yd);
        for _ in 0..UNDISTORT_MAX_ITERS {
            let r2 = x * x + y * y;
            let radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
            let xy = x * y;
            let dx = 2.0 * d.p1 * xy + d.p2 * (r2 + 2.0 * x * x);
            let dy = d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * xy;
            let nx = (xd - dx) / radial;
            let ny = (yd - dy) / radial;
            let step = (nx - x).abs().max((ny - y).abs()) * scale;
            x = nx;
            y = ny;
            if !step.is_finite() {
                return Err(GeometryError::UndistortDivergence);
            }
            if step < UNDISTORT_STEP_TOL_PX {
                break;
            }
        }
        let (rx, ry) = d.apply(x, y);
        let residual = ((rx - xd) * k.fx).abs().max(((ry - yd) * k.fy).abs());
        if !(residual < UNDISTORT_RESIDUAL_TOL_PX) {
            return Err(GeometryError::UndistortDivergence);
        }
        Ok((x, y))
    }

    /// World-frame viewing ray through a pixel.
    pub fn backproject_ray(&self, pixel: &Vector2<f64>) -> Result<Ray, GeometryError> {
        let (x, y) = self.undistort(pixel)?;
        let dir_cam = Vector3::new(x, y, 1.0);
        let dir = self.pose.rotation.transpose() * dir_cam;
        Ok(Ray::new(self.center(), dir))
    }

    /// Whether a fractional pixel lies on the sensor (pixel centres at integers).
    #[inline]
    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= -0.5
            && pixel.y >= -0.5
            && pixel.x < self.width as f64 - 0.5
            && pixel.y < self.height as f64 - 0.5
    }

    /// Depth of a world point along this camera's optical axis.
    pub fn depth_of(&self, point: &Vector3<f64>) -> f64 {
        self.pose.apply(point).z
    }
}
