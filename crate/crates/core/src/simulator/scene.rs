use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::Ray;

const HIT_EPS: f64 = 1e-6;
const BISECTION_TOL_MM: f64 = 1e-9;

/// Axis-aligned world-xy rectangle limiting a plane primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipRect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl ClipRect {
    fn contains(&self, p: &Vector3<f64>) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

/// Regular grid of heights `z(x, y)` in mm, bilinear between nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    /// World xy of node `(0, 0)`.
    pub origin: [f64; 2],
    /// Node spacing in x and y (mm).
    pub spacing: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    /// Row-major heights, `ny` rows of `nx` nodes.
    pub heights: Vec<f64>,
}

impl HeightField {
    pub fn from_fn(
        origin: [f64; 2],
        spacing: [f64; 2],
        nx: usize,
        ny: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut heights = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                heights.push(f(
                    origin[0] + i as f64 * spacing[0],
                    origin[1] + j as f64 * spacing[1],
                ));
            }
        }
        Self {
            origin,
            spacing,
            nx,
            ny,
            heights,
        }
    }

    fn extent(&self) -> (f64, f64, f64, f64) {
        (
            self.origin[0],
            self.origin[0] + (self.nx - 1) as f64 * self.spacing[0],
            self.origin[1],
            self.origin[1] + (self.ny - 1) as f64 * self.spacing[1],
        )
    }

    fn z_bounds(&self) -> (f64, f64) {
        self.heights
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| {
                (lo.min(z), hi.max(z))
            })
    }

    /// Bilinear height at world `(x, y)`; `None` outside the grid.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        let (x0, x1, y0, y1) = self.extent();
        if !(x >= x0 && x <= x1 && y >= y0 && y <= y1) {
            return None;
        }
        let gx = (x - x0) / self.spacing[0];
        let gy = (y - y0) / self.spacing[1];
        let i = (gx.floor() as usize).min(self.nx - 2);
        let j = (gy.floor() as usize).min(self.ny - 2);
        let (fx, fy) = (gx - i as f64, gy - j as f64);
        let h = |i: usize, j: usize| self.heights[j * self.nx + i];
        Some(
            h(i, j) * (1.0 - fx) * (1.0 - fy)
                + h(i + 1, j) * fx * (1.0 - fy)
                + h(i, j + 1) * (1.0 - fx) * fy
                + h(i + 1, j + 1) * fx * fy,
        )
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.nx < 2 || self.ny < 2 || self.heights.len() != self.nx * self.ny {
            return Err(SimError::InvalidScene("height field grid malformed".into()));
        }
        if !(self.spacing[0] > 0.0 && self.spacing[1] > 0.0) {
            return Err(SimError::InvalidScene("height field spacing must be positive".into()));
        }
        if !self.heights.iter().all(|h| h.is_finite()) {
            return Err(SimError::InvalidScene("non-finite height".into()));
        }
        Ok(())
    }

    /// Ray marching with bisection refinement; returns the ray parameter.
    fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<f64> {
        let (x0, x1, y0, y1) = self.extent();
        let (z0, z1) = self.z_bounds();
        let (mut lo, mut hi) = (t_min, t_max);
        for (o, d, a, b) in [
            (ray.origin.x, ray.direction.x, x0, x1),
            (ray.origin.y, ray.direction.y, y0, y1),
            (ray.origin.z, ray.direction.z, z0, z1),
        ] {
            if d.abs() < 1e-15 {
                if o < a || o > b {
                    return None;
                }
                continue;
            }
            let (ta, tb) = ((a - o) / d, (b - o) / d);
            lo = lo.max(ta.min(tb));
            hi = hi.min(ta.max(tb));
        }
        if !(lo <= hi) {
            return None;
        }
        let g = |t: f64| {
            let p = ray.at(t);
            self.height_at(p.x, p.y).map(|h| p.z - h)
        };
        let dxy = (ray.direction.x.powi(2) + ray.direction.y.powi(2)).sqrt();
        let cell = self.spacing[0].min(self.spacing[1]);
        let mut dt = f64::INFINITY;
        if dxy > 1e-12 {
            dt = dt.min(0.25 * cell / dxy);
        }
        if ray.direction.z.abs() > 1e-12 {
            dt = dt.min(((z1 - z0).max(1e-3) / 64.0) / ray.direction.z.abs());
        }
        dt = dt.min((hi - lo).max(1e-9));
        let mut t_prev = lo;
        let mut g_prev = g(lo.min(hi))?;
        if g_prev == 0.0 {
            return Some(lo);
        }
        let mut t = lo;
        while t < hi {
            t = (t + dt).min(hi);
            let Some(gt) = g(t) else { break };
            if gt == 0.0 || (gt < 0.0) != (g_prev < 0.0) {
                let (mut a, mut b) = (t_prev, t);
                let neg_at_a = g_prev < 0.0;
                while b - a > BISECTION_TOL_MM {
                    let m = 0.5 * (a + b);
                    match g(m) {
                        Some(gm) if (gm < 0.0) == neg_at_a && gm != 0.0 => a = m,
                        _ => b = m,
                    }
                }
                return Some(0.5 * (a + b));
            }
            t_prev = t;
            g_prev = gt;
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    /// Points with `normal · x = offset`, optionally bounded in world xy.
    Plane {
        normal: [f64; 3],
        offset: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clip: Option<ClipRect>,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    HeightField(HeightField),
}

impl Primitive {
    pub fn horizontal_plane(z: f64) -> Self {
        Primitive::Plane {
            normal: [0.0, 0.0, 1.0],
            offset: z,
            clip: None,
        }
    }

    /// Smallest ray parameter in `(t_min, t_max)` hitting the primitive.
    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<f64> {
        match self {
            Primitive::Plane {
                normal,
                offset,
                clip,
            } => {
                let n = Vector3::from(*normal);
                let denom = n.dot(&ray.direction);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = (offset - n.dot(&ray.origin)) / denom;
                if !(t > t_min && t < t_max) {
                    return None;
                }
                match clip {
                    Some(c) if !c.contains(&ray.at(t)) => None,
                    _ => Some(t),
                }
            }
            Primitive::Sphere { center, radius } => {
                let oc = ray.origin - Vector3::from(*center);
                let b = oc.dot(&ray.direction);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                // numerically stable roots
                let q = if b > 0.0 { -b - sq } else { -b + sq };
                let (mut t0, mut t1) = (q, if q != 0.0 { c / q } else { 0.0 });
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                [t0, t1].into_iter().find(|&t| t > t_min && t < t_max)
            }
            Primitive::HeightField(hf) => hf.intersect(ray, t_min, t_max),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        match self {
            Primitive::Plane { normal, .. } => {
                let n = Vector3::from(*normal);
                if !((n.norm() - 1.0).abs() < 1e-9) {
                    return Err(SimError::InvalidScene("plane normal must be unit length".into()));
                }
                Ok(())
            }
            Primitive::Sphere { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(SimError::InvalidScene("sphere radius must be positive".into()));
                }
                Ok(())
            }
            Primitive::HeightField(hf) => hf.validate(),
        }
    }
}

/// Sum of cosines over world xy: `base + Σ amplitude·cos(2π f·(x, y) + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothField {
    pub base: f64,
    #[serde(default)]
    pub terms: Vec<CosineTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineTerm {
    pub amplitude: f64,
    /// Spatial frequency in cycles/mm along world x and y.
    pub frequency: [f64; 2],
    pub phase: f64,
}

impl SmoothField {
    pub fn constant(v: f64) -> Self {
        Self {
            base: v,
            terms: Vec::new(),
        }
    }

    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.terms.iter().fold(self.base, |acc, t| {
            acc + t.amplitude
                * (std::f64::consts::TAU * (t.frequency[0] * x + t.frequency[1] * y) + t.phase)
                    .cos()
        })
    }

    fn bounds(&self) -> (f64, f64) {
        let spread: f64 = self.terms.iter().map(|t| t.amplitude.abs()).sum();
        (self.base - spread, self.base + spread)
    }
}

/// Average (`A`) and amplitude (`B`) intensity fields of the fringe model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflectivity {
    pub average: SmoothField,
    pub amplitude: SmoothField,
}

impl Reflectivity {
    pub fn uniform(a: f64, b: f64) -> Self {
        Self {
            average: SmoothField::constant(a),
            amplitude: SmoothField::constant(b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of additive Gaussian intensity noise.
    pub sigma: f64,
    /// Quantize to 256 levels (8-bit camera).
    pub quantize: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma: 0.005,
            quantize: true,
        }
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            sigma: 0.0,
            quantize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    pub reflectivity: Reflectivity,
    #[serde(default)]
    pub noise: NoiseModel,
}

/// Nearest intersection of a ray with a scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vector3<f64>,
    pub primitive: usize,
}

impl Scene {
    pub fn new(primitives: Vec<Primitive>, reflectivity: Reflectivity, noise: NoiseModel) -> Result<Self, SimError> {
        let s = Self {
            primitives,
            reflectivity,
            noise,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.primitives.is_empty() {
            return Err(SimError::InvalidScene("scene has no primitives".into()));
        }
        for p in &self.primitives {
            p.validate()?;
        }
        let (a_lo, a_hi) = self.reflectivity.average.bounds();
        let (b_lo, b_hi) = self.reflectivity.amplitude.bounds();
        if b_lo < 0.0 || a_lo - b_hi < -1e-12 || a_hi + b_hi > 1.0 + 1e-12 {
            return Err(SimError::InvalidScene(format!(
                "reflectivity must satisfy 0 <= A - B and A + B <= 1 (A in [{a_lo:.3}, {a_hi:.3}], B in [{b_lo:.3}, {b_hi:.3}])"
            )));
        }
        if !(self.noise.sigma >= 0.0) {
            return Err(SimError::InvalidScene("noise sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn nearest_hit(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, p) in self.primitives.iter().enumerate() {
            let limit = best.map_or(f64::INFINITY, |b| b.t);
            if let Some(t) = p.intersect(ray, HIT_EPS, limit) {
                best = Some(Hit {
                    t,
                    point: ray.at(t),
                    primitive: i,
                });
            }
        }
        best
    }

    /// Whether the segment from `point` toward `light` is blocked.
    pub fn occluded(&self, point: &Vector3<f64>, light: &Vector3<f64>) -> bool {
        let to = light - point;
        let dist = to.norm();
        let ray = Ray::new(*point, to);
        self.primitives
            .iter()
            .any(|p| p.intersect(&ray, 1e-4, dist * (1.0 - 1e-9)).is_some())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Scene = serde_json::from_str(text).map_err(|e| SimError::InvalidScene(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn down_ray(x: f64, y: f64) -> Ray {
        Ray::new(Vector3::new(x, y, 500.0), Vector3::new(0.0, 0.0, -1.0))
    }

    #[test]
    fn sphere_and_plane_hits() {
        let s = Primitive::Sphere {
            center: [0.0, 0.0, 0.0],
            radius: 25.0,
        };
        let t = s.intersect(&down_ray(0.0, 0.0), 1e-6, f64::INFINITY).unwrap();
        assert!((t - 475.0).abs() < 1e-12);
        assert!(s.intersect(&down_ray(30.0, 0.0), 1e-6, f64::INFINITY).is_none());
        let p = Primitive::horizontal_plane(-10.0);
        let t = p.intersect(&down_ray(3.0, 4.0), 1e-6, f64::INFINITY).unwrap();
        assert!((t - 510.0).abs() < 1e-12);
    }

    #[test]
    fn clipped_plane_respects_bounds() {
        let p = Primitive::Plane {
            normal: [0.0, 0.0, 1.0],
            offset: 0.0,
            clip: Some(ClipRect {
                x_min: -10.0,
                x_max: 10.0,
                y_min: -10.0,
                y_max: 10.0,
            }),
        };
        assert!(p.intersect(&down_ray(0.0, 0.0), 0.0, f64::INFINITY).is_some());
        assert!(p.intersect(&down_ray(11.0, 0.0), 0.0, f64::INFINITY).is_none());
    }

    #[test]
    fn height_field_matches_analytic_surface() {
        // bilinear interpolation is exact for z = a + b·x + c·y + d·x·y on each cell
        let f = |x: f64, y: f64| 5.0 + 0.1 * x - 0.05 * y;
        let hf = HeightField::from_fn([-50.0, -50.0], [5.0, 5.0], 21, 21, f);
        let prim = Primitive::HeightField(hf);
        let ray = Ray::new(Vector3::new(-100.0, 20.0, 600.0), Vector3::new(0.12, -0.03, -1.0));
        let t = prim.intersect(&ray, 1e-6, f64::INFINITY).unwrap();
        let p = ray.at(t);
        assert!((p.z - f(p.x, p.y)).abs() < 1e-8, "{}", p.z - f(p.x, p.y));
        assert!(prim.intersect(&down_ray(80.0, 0.0), 1e-6, f64::INFINITY).is_none());
    }

    #[test]
    fn reflectivity_bounds_enforced() {
        let bad = Scene::new(
            vec![Primitive::horizontal_plane(0.0)],
            Reflectivity::uniform(0.7, 0.4),
            NoiseModel::none(),
        );
        assert!(bad.is_err());
        let empty = Scene::new(vec![], Reflectivity::uniform(0.5, 0.25), NoiseModel::none());
        assert!(empty.is_err());
    }

    #[test]
    fn scene_json_roundtrip() {
        let s = Scene::new(
            vec![
                Primitive::horizontal_plane(0.0),
                Primitive::Sphere {
                    center: [1.0, 2.0, 3.0],
                    radius: 4.0,
                },
            ],
            Reflectivity::uniform(0.5, 0.25),
            NoiseModel::default(),
        )
        .unwrap();
        assert_eq!(Scene::from_json(&s.to_json()).unwrap(), s);
    }
}
