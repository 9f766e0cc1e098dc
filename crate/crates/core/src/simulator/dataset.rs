use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{camera_seed, render_fringe_stack, render_reference, FringeStack, GroundTruth};
use super::scene::{CosineTerm, HeightField, NoiseModel, Primitive, Reflectivity, Scene, SmoothField};
use super::SimError;
use crate::fpi::FpiImage;
use crate::geometry::Rig;
use crate::phase::ps_numerator_denominator;
use crate::Grid;

const MAX_PLACEMENT_ATTEMPTS: usize = 100;

/// Randomization ranges for training scenes (mm unless noted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetRecipe {
    pub steps: usize,
    /// Fraction of object scenes held out for validation.
    pub val_fraction: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Background plane height range.
    pub background_z: (f64, f64),
    /// Maximum background tilt in degrees.
    pub max_tilt_deg: f64,
    /// Objects are placed within this half-width around the origin.
    pub placement_half_width: f64,
    /// Tallest object relief above the background.
    pub max_height: f64,
    pub sphere_radius: (f64, f64),
    pub noise: NoiseModel,
    /// Minimum fraction of camera-1 pixels that must be lit.
    pub min_coverage: f64,
}

impl Default for DatasetRecipe {
    fn default() -> Self {
        Self {
            steps: 12,
            val_fraction: 0.2,
            min_objects: 1,
            max_objects: 3,
            background_z: (-30.0, 10.0),
            max_tilt_deg: 8.0,
            placement_half_width: 80.0,
            max_height: 70.0,
            sphere_radius: (15.0, 40.0),
            noise: NoiseModel::none(),
            min_coverage: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

/// File layout of one sample; paths are relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: usize,
    pub reference: bool,
    pub split: Split,
    pub scene: String,
    /// One `N`-channel stack per rig camera.
    pub stacks: Vec<String>,
    /// Camera-1 truth: depth, Φ, φ, k, mask, primitive, B.
    pub truth: String,
    /// Camera-1 labels `(2/N)·M` and `(2/N)·D` from the rendered stack.
    pub labels: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub rig: String,
    pub steps: usize,
    pub periods: u32,
    pub recipe: DatasetRecipe,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let m: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if m.samples.iter().filter(|s| s.reference).count() != 1 {
            return Err(SimError::Dataset("manifest needs exactly one reference sample".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn reference(&self) -> &SampleRecord {
        self.samples.iter().find(|s| s.reference).expect("validated on load")
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

/// A sample read back from disk.
#[derive(Debug, Clone)]
pub struct SampleData {
    pub stacks: Vec<FringeStack>,
    pub truth: GroundTruth,
    pub m_label: Grid<f64>,
    pub d_label: Grid<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn random_reflectivity(rng: &mut ChaCha8Rng) -> Reflectivity {
    let terms = |total: f64, rng: &mut ChaCha8Rng| -> Vec<CosineTerm> {
        let a = rng.random_range(0.0..1.0);
        [a * total, (1.0 - a) * total]
            .into_iter()
            .map(|amplitude| {
                let angle = rng.random_range(0.0..TAU);
                let f = rng.random_range(1.0 / 400.0..1.0 / 60.0);
                CosineTerm {
                    amplitude,
                    frequency: [f * angle.cos(), f * angle.sin()],
                    phase: rng.random_range(0.0..TAU),
                }
            })
            .collect()
    };
    let b0 = rng.random_range(0.2..0.3);
    let bvar = rng.random_range(0.0..0.05);
    let avar = rng.random_range(0.0..0.08);
    let b_hi = b0 + bvar;
    let a0 = rng.random_range(b_hi + avar..1.0 - b_hi - avar);
    Reflectivity {
        average: SmoothField {
            base: a0,
            terms: terms(avar, rng),
        },
        amplitude: SmoothField {
            base: b0,
            terms: terms(bvar, rng),
        },
    }
}

/// Relief shapes for height-field objects, in the object's rotated frame.
fn relief(kind: u32, u: f64, v: f64, size: f64, height: f64) -> f64 {
    let r2 = (u * u + v * v) / (size * size);
    match kind {
        // smooth bump
        0 => height * (-2.0 * r2).exp(),
        // ridge
        1 => height * (-2.0 * (u / (0.35 * size)).powi(2)).exp() * (-0.5 * (v / size).powi(2)).exp(),
        // flat-topped mesa with soft walls
        2 => {
            let e = (u.abs().max(v.abs()) / size - 0.6) / 0.12;
            height / (1.0 + e.clamp(-30.0, 30.0).exp())
        }
        // ramp rising across the patch
        _ => {
            let window = (-2.0 * (v / size).powi(2)).exp() * (-2.0 * (u / size).powi(4)).exp();
            height * (0.5 + 0.5 * (u / size).clamp(-1.0, 1.0)) * window
        }
    }
}

fn random_scene(rng: &mut ChaCha8Rng, recipe: &DatasetRecipe) -> Result<Scene, SimError> {
    let bg_z = uniform(rng, recipe.background_z);
    let tilt = rng.random_range(-recipe.max_tilt_deg..=recipe.max_tilt_deg).to_radians();
    let az = rng.random_range(0.0..TAU);
    let normal = [tilt.sin() * az.cos(), tilt.sin() * az.sin(), tilt.cos()];
    let mut primitives = vec![Primitive::Plane {
        normal,
        offset: normal[2] * bg_z,
        clip: None,
    }];
    // background height under a world xy point
    let ground = |x: f64, y: f64| bg_z - (normal[0] * x + normal[1] * y) / normal[2];
    let count = rng.random_range(recipe.min_objects..=recipe.max_objects.max(recipe.min_objects));
    let hw = recipe.placement_half_width;
    for _ in 0..count {
        let (cx, cy) = (rng.random_range(-hw..hw), rng.random_range(-hw..hw));
        if rng.random_range(0.0..1.0) < 0.4 {
            let r = uniform(rng, recipe.sphere_radius);
            // sink the sphere so its top stays below the height limit
            let top = rng.random_range(0.3 * r..(2.0 * r).min(recipe.max_height).max(0.3 * r + 1e-6));
            primitives.push(Primitive::Sphere {
                center: [cx, cy, ground(cx, cy) + top - r],
                radius: r,
            });
        } else {
            let kind = rng.random_range(0..4u32);
            let size = rng.random_range(25.0..55.0);
            let height = rng.random_range(0.2..1.0) * recipe.max_height;
            let angle = rng.random_range(0.0..TAU);
            let (s, c) = angle.sin_cos();
            let half = 1.6 * size;
            let nodes = 49;
            let spacing = 2.0 * half / (nodes - 1) as f64;
            primitives.push(Primitive::HeightField(HeightField::from_fn(
                [cx - half, cy - half],
                [spacing, spacing],
                nodes,
                nodes,
                |x, y| {
                    let (dx, dy) = (x - cx, y - cy);
                    let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
                    ground(x, y) + relief(kind, u, v, size, height)
                },
            )));
        }
    }
    Scene::new(primitives, random_reflectivity(rng), recipe.noise)
}

fn truth_image(t: &GroundTruth) -> FpiImage {
    let f = |g: &Grid<i32>| g.map(|&v| v as f64);
    FpiImage::from_channels(&[
        &t.depth,
        &t.abs_phase,
        &t.wrapped,
        &f(&t.orders),
        &t.mask.map(|&m| if m { 1.0 } else { 0.0 }),
        &f(&t.primitive),
        &t.amplitude,
    ])
}

fn truth_from_image(img: &FpiImage) -> Result<GroundTruth, SimError> {
    if img.channels != 7 {
        return Err(SimError::Dataset(format!("truth file has {} channels, expected 7", img.channels)));
    }
    let i = |g: Grid<f64>| g.map(|&v| v.round() as i32);
    Ok(GroundTruth {
        depth: img.channel(0),
        abs_phase: img.channel(1),
        wrapped: img.channel(2),
        orders: i(img.channel(3)),
        mask: img.channel(4).map(|&v| v > 0.5),
        primitive: i(img.channel(5)),
        amplitude: img.channel(6),
    })
}

impl GroundTruth {
    /// Seven-channel FPI1 file: depth, absolute phase, wrapped phase, orders,
    /// mask, primitive label, amplitude.
    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        Ok(truth_image(self).save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        truth_from_image(&FpiImage::load(path)?)
    }
}

fn stack_image(s: &FringeStack) -> FpiImage {
    let refs: Vec<&Grid<f64>> = s.images.iter().collect();
    FpiImage::from_channels(&refs)
}

fn write_sample(
    dir: &Path,
    id: usize,
    reference: bool,
    split: Split,
    scene: &Scene,
    rendered: &[(FringeStack, GroundTruth)],
) -> Result<SampleRecord, SimError> {
    let name = format!("sample_{id:04}");
    std::fs::create_dir_all(dir.join(&name))?;
    let rel = |f: &str| format!("{name}/{f}");
    std::fs::write(dir.join(rel("scene.json")), scene.to_json())?;
    let mut stacks = Vec::new();
    for (i, (stack, _)) in rendered.iter().enumerate() {
        let p = rel(&format!("cam{}.fpi", i + 1));
        stack_image(stack).save(&dir.join(&p))?;
        stacks.push(p);
    }
    let cam1 = &rendered[0];
    truth_image(&cam1.1).save(&dir.join(rel("truth.fpi")))?;
    let (m, d) = ps_numerator_denominator(&cam1.0.images).map_err(|e| SimError::Dataset(e.to_string()))?;
    let scale = 2.0 / cam1.0.steps as f64;
    FpiImage::from_channels(&[&m.map(|v| v * scale), &d.map(|v| v * scale)])
        .save(&dir.join(rel("labels.fpi")))?;
    Ok(SampleRecord {
        id,
        reference,
        split,
        scene: rel("scene.json"),
        stacks,
        truth: rel("truth.fpi"),
        labels: rel("labels.fpi"),
    })
}

/// Renders `count` samples into `out_dir`: the reference plane first, then
/// `count − 1` randomized object scenes, and writes `manifest.json` and
/// `rig.json` next to them.
pub fn generate_dataset(
    count: usize,
    rig: &Rig,
    recipe: &DatasetRecipe,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest, SimError> {
    if count == 0 {
        return Err(SimError::Dataset("count must be at least 1".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    rig.save(&out_dir.join("rig.json"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let reference = render_reference(rig, recipe.steps)?;
    let rendered: Vec<_> = reference
        .stacks
        .into_iter()
        .zip(reference.truth)
        .collect();
    let mut samples = vec![write_sample(
        out_dir,
        0,
        true,
        Split::Train,
        &super::scenes::reference_plane_scene(),
        &rendered,
    )?];

    let objects = count - 1;
    let n_val = ((objects as f64) * recipe.val_fraction).round() as usize;
    for id in 1..count {
        let split = if id > objects - n_val { Split::Val } else { Split::Train };
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let scene = random_scene(&mut rng, recipe)?;
            let scene_seed = rng.random::<u64>();
            let rendered = rig
                .cameras
                .iter()
                .enumerate()
                .map(|(i, cam)| {
                    render_fringe_stack(&scene, cam, &rig.projector, recipe.steps, camera_seed(scene_seed, i))
                        .map(|(mut s, t)| {
                            s.camera_id = i;
                            (s, t)
                        })
                })
                .collect::<Result<Vec<_>, _>>();
            let Ok(rendered) = rendered else { continue };
            let m = &rendered[0].1.mask;
            if (m.count() as f64) < recipe.min_coverage * m.len() as f64
                || rendered.iter().any(|(_, t)| t.mask.count() == 0)
            {
                continue;
            }
            placed = Some((scene, rendered));
            break;
        }
        let (scene, rendered) = placed.ok_or(SimError::SceneOutsideView(MAX_PLACEMENT_ATTEMPTS))?;
        samples.push(write_sample(out_dir, id, false, split, &scene, &rendered)?);
    }

    let manifest = DatasetManifest {
        seed,
        rig: "rig.json".into(),
        steps: recipe.steps,
        periods: rig.projector.periods,
        recipe: recipe.clone(),
        samples,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.join(rel)
}

/// Loads the stacks, camera-1 truth and labels of one sample.
pub fn load_sample(manifest_dir: &Path, manifest: &DatasetManifest, record: &SampleRecord) -> Result<SampleData, SimError> {
    let stacks = record
        .stacks
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let img = FpiImage::load(&resolve(manifest_dir, p))?;
            let images = (0..img.channels).map(|c| img.channel(c)).collect();
            FringeStack::new(images, manifest.periods, i)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let truth = truth_from_image(&FpiImage::load(&resolve(manifest_dir, &record.truth))?)?;
    let labels = FpiImage::load(&resolve(manifest_dir, &record.labels))?;
    if labels.channels != 2 {
        return Err(SimError::Dataset("labels file must have 2 channels".into()));
    }
    Ok(SampleData {
        stacks,
        truth,
        m_label: labels.channel(0),
        d_label: labels.channel(1),
    })
}
