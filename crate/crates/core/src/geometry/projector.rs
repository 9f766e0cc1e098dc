use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{CameraModel, GeometryError};

/// Device axis along which the projected sinusoid varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FringeAxis {
    /// Phase varies with the projector column `u` (vertical fringes).
    Columns,
    /// Phase varies with the projector row `v` (horizontal fringes).
    Rows,
}

/// Projector modelled as an inverse pinhole camera displaying `periods`
/// sinusoidal fringes across its fringe axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorModel {
    pub lens: CameraModel,
    pub fringe_axis: FringeAxis,
    pub periods: u32,
}

impl ProjectorModel {
    pub fn new(lens: CameraModel, fringe_axis: FringeAxis, periods: u32) -> Result<Self, GeometryError> {
        let p = Self {
            lens,
            fringe_axis,
            periods,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.periods < 1 {
            return Err(GeometryError::InvalidModel(
                "projector needs at least one fringe period".into(),
            ));
        }
        self.lens.validate()
    }

    /// Pixel extent of the fringe axis.
    pub fn axis_extent(&self) -> f64 {
        match self.fringe_axis {
            FringeAxis::Columns => self.lens.width as f64,
            FringeAxis::Rows => self.lens.height as f64,
        }
    }

    /// Largest absolute phase the pattern spans, `2πK`.
    pub fn max_phase(&self) -> f64 {
        TAU * self.periods as f64
    }

    /// Pixels per fringe period along the fringe axis.
    pub fn period_px(&self) -> f64 {
        self.axis_extent() / self.periods as f64
    }

    /// Absolute phase to the projector coordinate along the fringe axis:
    /// `u_p = Φ · extent / (2πK)`.
    pub fn phase_to_coordinate(&self, phase: f64) -> Result<f64, GeometryError> {
        if !(phase >= 0.0 && phase <= self.max_phase()) {
            return Err(GeometryError::PhaseOutOfRange(phase));
        }
        Ok(phase * self.axis_extent() / self.max_phase())
    }

    pub fn coordinate_to_phase(&self, coord: f64) -> f64 {
        coord * self.max_phase() / self.axis_extent()
    }

    fn axis_focal_center(&self) -> (f64, f64) {
        let k = &self.lens.intrinsics;
        match self.fringe_axis {
            FringeAxis::Columns => (k.fx, k.cx),
            FringeAxis::Rows => (k.fy, k.cy),
        }
    }

    /// Plane swept by the projector line at `coord` along the fringe axis,
    /// returned as `(unit normal, point on plane)` in world coordinates.
    pub fn fringe_plane(&self, coord: f64) -> (Vector3<f64>, Vector3<f64>) {
        let (f, c) = self.axis_focal_center();
        let a = (coord - c) / f;
        let n_dev = match self.fringe_axis {
            FringeAxis::Columns => Vector3::new(1.0, 0.0, -a),
            FringeAxis::Rows => Vector3::new(0.0, 1.0, -a),
        };
        let n = (self.lens.pose.rotation.transpose() * n_dev).normalize();
        (n, self.lens.center())
    }

    /// Undistorted fringe-axis coordinate of a world point, if the point is
    /// in front of the projector and falls on its (distorted) pixel array.
    pub fn illuminated_coordinate(&self, point: &Vector3<f64>) -> Option<f64> {
        let pc = self.lens.pose.apply(point);
        if !(pc.z > 0.0) {
            return None;
        }
        let (x, y) = (pc.x / pc.z, pc.y / pc.z);
        let (xd, yd) = self.lens.distortion.apply(x, y);
        let px = self.lens.to_pixel(xd, yd);
        if !(px.x >= 0.0
            && px.y >= 0.0
            && px.x < self.lens.width as f64
            && px.y < self.lens.height as f64)
        {
            return None;
        }
        let k = &self.lens.intrinsics;
        Some(match self.fringe_axis {
            FringeAxis::Columns => k.fx * x + k.cx,
            FringeAxis::Rows => k.fy * y + k.cy,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Distortion, Intrinsics, RigidTransform};

    fn projector(width: usize, height: usize, periods: u32) -> ProjectorModel {
        let lens = CameraModel::new(
            Intrinsics {
                fx: 1500.0,
                fy: 1500.0,
                cx: width as f64 / 2.0,
                cy: height as f64 / 2.0,
            },
            Distortion::default(),
            width,
            height,
            RigidTransform::identity(),
        )
        .unwrap();
        ProjectorModel::new(lens, FringeAxis::Columns, periods).unwrap()
    }

    #[test]
    fn phase_to_column_values() {
        let p = projector(912, 1140, 48);
        assert_eq!(p.phase_to_coordinate(0.0).unwrap(), 0.0);
        assert!((p.phase_to_coordinate(TAU).unwrap() - 19.0).abs() < 1e-12);
        assert!((p.phase_to_coordinate(TAU * 48.0).unwrap() - 912.0).abs() < 1e-9);
    }

    #[test]
    fn phase_outside_range_rejected() {
        let p = projector(912, 1140, 48);
        assert!(matches!(
            p.phase_to_coordinate(-1e-9),
            Err(GeometryError::PhaseOutOfRange(_))
        ));
        assert!(p.phase_to_coordinate(TAU * 48.0 + 1e-6).is_err());
        assert!(p.phase_to_coordinate(f64::NAN).is_err());
    }

    #[test]
    fn column_mapping_monotone_and_invertible() {
        let p = projector(192, 240, 12);
        let mut prev = -1.0;
        for i in 0..=1000 {
            let phi = p.max_phase() * i as f64 / 1000.0;
            let u = p.phase_to_coordinate(phi).unwrap();
            assert!(u > prev);
            prev = u;
            assert!((p.coordinate_to_phase(u) - phi).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_periods_invalid() {
        let p = projector(192, 240, 12);
        assert!(ProjectorModel::new(p.lens.clone(), FringeAxis::Columns, 0).is_err());
    }

    #[test]
    fn plane_contains_illuminated_points() {
        let p = projector(192, 240, 12);
        for &(x, y, z) in &[(10.0, 5.0, 600.0), (-40.0, 30.0, 800.0)] {
            let pt = Vector3::new(x, y, z);
            let u = p.illuminated_coordinate(&pt).unwrap();
            let (n, o) = p.fringe_plane(u);
            assert!(n.dot(&(pt - o)).abs() < 1e-9);
        }
    }
}
