use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    CameraModel, Distortion, FringeAxis, GeometryError, Intrinsics, ProjectorModel, RigidTransform,
};

/// Resolution presets for the synthetic rig.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RigScale {
    /// 128×96 cameras, 192×240 projector.
    Desk,
    /// 640×480 cameras, 912×1140 projector.
    Paper,
}

impl RigScale {
    pub fn camera_size(self) -> (usize, usize) {
        match self {
            RigScale::Desk => (128, 96),
            RigScale::Paper => (640, 480),
        }
    }

    pub fn projector_size(self) -> (usize, usize) {
        match self {
            RigScale::Desk => (192, 240),
            RigScale::Paper => (912, 1140),
        }
    }
}

/// One projector and two or more cameras sharing the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub cameras: Vec<CameraModel>,
    pub projector: ProjectorModel,
    /// Nominal measurement volume as world depth bounds `(zmin, zmax)` in mm.
    pub volume: (f64, f64),
}

/// Extrinsic calibration error model: each device pose is rotated by a random
/// angle up to `rotation_deg` about a random axis and shifted by up to
/// `translation_mm` in a random direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub rotation_deg: f64,
    pub translation_mm: f64,
}

const STANDOFF_MM: f64 = 700.0;

struct DeviceLayout {
    center: [f64; 3],
    footprint_mm: f64,
    distortion: Distortion,
}

fn layouts() -> [DeviceLayout; 3] {
    [
        DeviceLayout {
            center: [-150.0, 0.0, STANDOFF_MM],
            footprint_mm: 240.0,
            distortion: Distortion {
                k1: -0.04,
                k2: 0.01,
                k3: 0.0,
                p1: 2e-4,
                p2: -1e-4,
            },
        },
        DeviceLayout {
            center: [105.0, 0.0, STANDOFF_MM],
            footprint_mm: 320.0,
            distortion: Distortion {
                k1: -0.03,
                k2: 0.005,
                k3: 0.0,
                p1: -1e-4,
                p2: 1.5e-4,
            },
        },
        DeviceLayout {
            center: [40.0, -110.0, STANDOFF_MM],
            footprint_mm: 320.0,
            distortion: Distortion {
                k1: 0.02,
                k2: 0.0,
                k3: 0.0,
                p1: 1e-4,
                p2: 0.0,
            },
        },
    ]
}

impl Rig {
    pub fn new(cameras: Vec<CameraModel>, projector: ProjectorModel, volume: (f64, f64)) -> Result<Self, GeometryError> {
        let rig = Self {
            cameras,
            projector,
            volume,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.cameras.len() < 2 {
            return Err(GeometryError::InvalidModel(
                "a rig needs at least two cameras".into(),
            ));
        }
        for cam in &self.cameras {
            cam.validate()?;
        }
        self.projector.validate()?;
        if !(self.volume.0 < self.volume.1) {
            return Err(GeometryError::InvalidModel("empty measurement volume".into()));
        }
        Ok(())
    }

    /// Three-camera synthetic rig 700 mm above the board, projector centred
    /// between camera 1 (left) and camera 2 (right), camera 3 off-axis.
    pub fn synthetic(scale: RigScale, periods: u32) -> Self {
        let (cw, ch) = scale.camera_size();
        let (pw, ph) = scale.projector_size();
        let cameras = layouts()
            .into_iter()
            .map(|l| {
                let center = Vector3::from(l.center);
                let f = cw as f64 * center.norm() / l.footprint_mm;
                CameraModel {
                    intrinsics: Intrinsics {
                        fx: f,
                        fy: f,
                        cx: (cw as f64 - 1.0) / 2.0,
                        cy: (ch as f64 - 1.0) / 2.0,
                    },
                    distortion: l.distortion,
                    width: cw,
                    height: ch,
                    pose: RigidTransform::look_at(center, Vector3::zeros()),
                }
            })
            .collect();
        let fp = pw as f64 * STANDOFF_MM / 420.0;
        let lens = CameraModel {
            intrinsics: Intrinsics {
                fx: fp,
                fy: fp,
                cx: pw as f64 / 2.0,
                cy: ph as f64 / 2.0,
            },
            distortion: Distortion::default(),
            width: pw,
            height: ph,
            pose: RigidTransform::look_at(Vector3::new(0.0, 0.0, STANDOFF_MM), Vector3::zeros()),
        };
        Self {
            cameras,
            projector: ProjectorModel {
                lens,
                fringe_axis: FringeAxis::Columns,
                periods,
            },
            volume: (-250.0, 150.0),
        }
    }

    /// Same rig with a different number of projected fringe periods.
    pub fn with_periods(&self, periods: u32) -> Self {
        let mut r = self.clone();
        r.projector.periods = periods;
        r
    }

    /// Copy whose device poses carry random extrinsic errors.
    pub fn perturbed(&self, jitter: Jitter, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        let mut perturb = |pose: &mut RigidTransform| {
            let axis = random_unit(&mut rng);
            let angle = rng.random_range(0.0..=jitter.rotation_deg).to_radians();
            let dir = random_unit(&mut rng);
            let shift = dir * rng.random_range(0.0..=jitter.translation_mm);
            // rotate about the device centre, then displace the centre
            let center = -(pose.rotation.transpose() * pose.translation);
            let delta = RigidTransform::from_axis_angle(axis, angle, Vector3::zeros());
            let rotation = pose.rotation * delta.rotation;
            let new_center = center + shift;
            *pose = RigidTransform {
                rotation,
                translation: -(rotation * new_center),
            };
        };
        for cam in &mut out.cameras {
            perturb(&mut cam.pose);
        }
        perturb(&mut out.projector.lens.pose);
        out
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, CalibrationError> {
        let file: CalibrationFile = serde_json::from_str(text)?;
        let cameras = file
            .cameras
            .iter()
            .map(DeviceRecord::to_camera)
            .collect::<Result<Vec<_>, _>>()?;
        let lens = file.projector.device.to_camera()?;
        let projector = ProjectorModel::new(lens, file.projector.fringe_axis, file.projector.periods)?;
        let volume = file.volume_mm.map(|v| (v[0], v[1])).unwrap_or((-250.0, 150.0));
        Ok(Rig::new(cameras, projector, volume)?)
    }

    pub fn to_json(&self) -> String {
        let file = CalibrationFile {
            cameras: self
                .cameras
                .iter()
                .enumerate()
                .map(|(i, c)| DeviceRecord::from_camera(&format!("cam{}", i + 1), c))
                .collect(),
            projector: ProjectorRecord {
                device: DeviceRecord::from_camera("projector", &self.projector.lens),
                fringe_axis: self.projector.fringe_axis,
                periods: self.projector.periods,
            },
            volume_mm: Some([self.volume.0, self.volume.1]),
        };
        serde_json::to_string_pretty(&file).expect("calibration serializes")
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("calibration file: {0}")]
    Io(#[from] std::io::Error),
    #[error("calibration json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationFile {
    cameras: Vec<DeviceRecord>,
    projector: ProjectorRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    volume_mm: Option<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProjectorRecord {
    #[serde(flatten)]
    device: DeviceRecord,
    fringe_axis: FringeAxis,
    periods: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct DeviceRecord {
    #[serde(default)]
    name: String,
    width: usize,
    height: usize,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(default)]
    k1: f64,
    #[serde(default)]
    k2: f64,
    #[serde(default)]
    k3: f64,
    #[serde(default)]
    p1: f64,
    #[serde(default)]
    p2: f64,
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl DeviceRecord {
    fn from_camera(name: &str, c: &CameraModel) -> Self {
        Self {
            name: name.to_string(),
            width: c.width,
            height: c.height,
            fx: c.intrinsics.fx,
            fy: c.intrinsics.fy,
            cx: c.intrinsics.cx,
            cy: c.intrinsics.cy,
            k1: c.distortion.k1,
            k2: c.distortion.k2,
            k3: c.distortion.k3,
            p1: c.distortion.p1,
            p2: c.distortion.p2,
            rotation: c.pose.rotation_row_major(),
            translation: [c.pose.translation.x, c.pose.translation.y, c.pose.translation.z],
        }
    }

    fn to_camera(&self) -> Result<CameraModel, GeometryError> {
        CameraModel::new(
            Intrinsics {
                fx: self.fx,
                fy: self.fy,
                cx: self.cx,
                cy: self.cy,
            },
            Distortion {
                k1: self.k1,
                k2: self.k2,
                k3: self.k3,
                p1: self.p1,
                p2: self.p2,
            },
            self.width,
            self.height,
            RigidTransform::from_row_major(self.rotation, self.translation)?,
        )
    }
}
