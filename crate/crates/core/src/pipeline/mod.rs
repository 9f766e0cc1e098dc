//! End-to-end runs (simulate → retrieve → unwrap → triangulate → evaluate)
//! driven by a JSON [`PipelineConfig`], with every intermediate written to an
//! artifact directory and a manifest that pins inputs, seeds and outputs.

mod compare;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eval::{
    effective_orders, order_error_rate, phase_and_depth_errors, wrapped_phase_rmse, EvalReport, SpherePairReport,
};
use crate::fpi::{save_grid, FpiImage};
use crate::geometry::{Jitter, Rig, RigScale};
use crate::grid::{Grid, Mask};
use crate::neural::{infer_cnn1, infer_cnn2, load_weights, Params};
use crate::phase::{ft_wrapped_phase, retrieve_ps, DEFAULT_MODULATION_THRESHOLD};
use crate::reconstruct::{reconstruct_camera_projector, PointCloud};
use crate::simulator::{
    make_discontinuity_scene, reference_plane_scene, render_reference, render_rig, render_unit_stack,
    sphere_pair_scene, staircase_scene, tilted_plane_scene, FringeStack, GroundTruth, NoiseModel, Scene,
    SPHERE_PAIR_TRUTH,
};
use crate::unwrap::{
    adc_update, reference_unwrap, spu_unwrap, tpu_hierarchical, unwrap_apply, DepthRange, OrderMap, ReferenceData,
    SpuConfig, WrappedPhase,
};

pub use compare::{compare_methods, four_method_configs, ComparisonRow, ComparisonTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retrieval {
    Ps,
    Ft,
    Cnn1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unwrapping {
    Spu,
    Ref,
    Tpu,
    Cnn2,
}

/// Depth bounds for SPU candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthMode {
    /// The rig's measurement volume.
    Global,
    /// Per-pixel windows around a previous frame (a second render of the same
    /// scene unwrapped with three-view SPU and the global range).
    Adc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinScene {
    ReferencePlane,
    /// Plane 20 mm below the board tilted by 15°.
    TiltedPlane,
    SpherePair,
    Staircase,
    Discontinuity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneSource {
    File(PathBuf),
    Builtin(BuiltinScene),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Row name in comparison tables.
    pub label: Option<String>,
    /// Calibration JSON; the synthetic rig of `rig_scale` when absent.
    pub rig: Option<PathBuf>,
    pub rig_scale: RigScale,
    pub scene: SceneSource,
    /// Replaces the scene's noise model.
    pub noise: Option<NoiseModel>,
    pub steps: usize,
    pub periods: u32,
    pub retrieval: Retrieval,
    pub unwrap: Unwrapping,
    pub views: usize,
    pub depth: DepthMode,
    pub adc_half_width: f64,
    /// Processing uses a perturbed copy of the rig (rendering uses the true one).
    pub calibration_jitter: Option<Jitter>,
    pub cnn1_weights: Option<PathBuf>,
    pub cnn2_weights: Option<PathBuf>,
    pub output: PathBuf,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            label: None,
            rig: None,
            rig_scale: RigScale::Desk,
            scene: SceneSource::Builtin(BuiltinScene::TiltedPlane),
            noise: None,
            steps: 3,
            periods: 12,
            retrieval: Retrieval::Ps,
            unwrap: Unwrapping::Spu,
            views: 2,
            depth: DepthMode::Global,
            adc_half_width: 5.0,
            calibration_jitter: None,
            cnn1_weights: None,
            cnn2_weights: None,
            output: PathBuf::from("out"),
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

impl PipelineError {
    /// Process exit status: 2 for configuration errors, 1 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::InvalidConfig(_) => 2,
            PipelineError::Stage { .. } => 1,
        }
    }
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    pub fn name(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            let r = serde_json::to_value(self.retrieval).unwrap();
            let u = serde_json::to_value(self.unwrap).unwrap();
            let mut s = format!("{}+{}", r.as_str().unwrap(), u.as_str().unwrap());
            if self.unwrap == Unwrapping::Spu {
                s += &format!("{}v", self.views);
                if self.depth == DepthMode::Adc {
                    s += "+adc";
                }
            }
            s
        })
    }

    /// Checks method combinations and that referenced files exist.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.to_string()));
        if self.steps < 3 {
            return bad("steps must be at least 3");
        }
        if self.periods == 0 {
            return bad("periods must be positive");
        }
        if self.retrieval == Retrieval::Cnn1 && self.cnn1_weights.is_none() {
            return bad("cnn1 retrieval requires cnn1_weights");
        }
        if self.unwrap == Unwrapping::Cnn2 && self.cnn2_weights.is_none() {
            return bad("cnn2 unwrapping requires cnn2_weights and reference data");
        }
        if self.unwrap == Unwrapping::Spu && !(2..=3).contains(&self.views) {
            return bad("spu needs 2 or 3 views");
        }
        if self.depth == DepthMode::Adc {
            if self.unwrap != Unwrapping::Spu {
                return bad("adc depth windows only apply to spu");
            }
            if !(self.adc_half_width > 0.0) {
                return bad("adc_half_width must be positive");
            }
        }
        let mut files: Vec<&PathBuf> = Vec::new();
        files.extend(self.rig.iter());
        if let SceneSource::File(p) = &self.scene {
            files.push(p);
        }
        if self.retrieval == Retrieval::Cnn1 {
            files.extend(self.cnn1_weights.iter());
        }
        if self.unwrap == Unwrapping::Cnn2 {
            files.extend(self.cnn2_weights.iter());
        }
        for f in files {
            if !f.is_file() {
                return Err(PipelineError::InvalidConfig(format!("missing file {}", f.display())));
            }
        }
        Ok(())
    }

    /// Seed of a named stage, derived from the single config seed.
    pub fn stage_seed(&self, name: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(name.as_bytes());
        u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
    }

    /// The true rig used for rendering.
    pub fn load_rig(&self) -> Result<Rig, PipelineError> {
        let rig = match &self.rig {
            Some(p) => Rig::load(p).map_err(stage("load"))?,
            None => Rig::synthetic(self.rig_scale, self.periods),
        };
        Ok(rig.with_periods(self.periods))
    }

    pub fn load_scene(&self, rig: &Rig) -> Result<Scene, PipelineError> {
        let mut scene = match &self.scene {
            SceneSource::File(p) => {
                let text = std::fs::read_to_string(p).map_err(stage("load"))?;
                Scene::from_json(&text).map_err(stage("load"))?
            }
            SceneSource::Builtin(b) => builtin_scene(*b, rig),
        };
        if let Some(n) = self.noise {
            scene.noise = n;
        }
        Ok(scene)
    }
}

pub fn builtin_scene(b: BuiltinScene, rig: &Rig) -> Scene {
    match b {
        BuiltinScene::ReferencePlane => reference_plane_scene(),
        BuiltinScene::TiltedPlane => tilted_plane_scene(-20.0, 15.0, NoiseModel::none()),
        BuiltinScene::SpherePair => sphere_pair_scene(NoiseModel::none()),
        BuiltinScene::Staircase => staircase_scene(rig),
        BuiltinScene::Discontinuity => make_discontinuity_scene(rig),
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    Ok(hex(&Sha256::digest(std::fs::read(path)?)))
}

/// Output of one retrieval: wrapped phase and, for PS and CNN1, the
/// numerator/denominator maps.
#[derive(Debug, Clone)]
pub struct Retrieved {
    pub md: Option<(Grid<f64>, Grid<f64>)>,
    pub phase: WrappedPhase,
    pub b_mod: Option<Grid<f64>>,
}

/// Retrieves one camera's wrapped phase. FT and CNN1 use only the first image.
pub fn retrieve(stack: &FringeStack, method: Retrieval, cnn1: Option<&Params<f32>>) -> Result<Retrieved, String> {
    match method {
        Retrieval::Ps => {
            let m = retrieve_ps(stack, DEFAULT_MODULATION_THRESHOLD).map_err(|e| e.to_string())?;
            Ok(Retrieved {
                phase: WrappedPhase {
                    phi: m.phi,
                    mask: m.mask,
                },
                md: Some((m.m, m.d)),
                b_mod: Some(m.b_mod),
            })
        }
        Retrieval::Ft => {
            let (phi, mask) =
                ft_wrapped_phase(&stack.images[0], None, DEFAULT_MODULATION_THRESHOLD).map_err(|e| e.to_string())?;
            Ok(Retrieved {
                md: None,
                phase: WrappedPhase { phi, mask },
                b_mod: None,
            })
        }
        Retrieval::Cnn1 => {
            let p = cnn1.ok_or("cnn1 weights not loaded")?;
            let m = infer_cnn1(p, &stack.images[0], DEFAULT_MODULATION_THRESHOLD).map_err(|e| e.to_string())?;
            Ok(Retrieved {
                phase: WrappedPhase {
                    phi: m.phi,
                    mask: m.mask,
                },
                md: Some((m.m, m.d)),
                b_mod: Some(m.b_mod),
            })
        }
    }
}

/// Manifest written next to every artifact set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 of every input file named by the config.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every artifact, keyed by file name.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: EvalReport,
    pub manifest: RunManifest,
    pub orders: OrderMap,
    /// Camera-1 wrapped phase the orders apply to.
    pub phase: WrappedPhase,
    pub truth: GroundTruth,
    pub abs_phase: Grid<f64>,
    pub depth: Grid<f64>,
}

fn orders_image(o: &OrderMap) -> FpiImage {
    FpiImage::from_channels(&[
        &o.k.map(|&k| k as f64),
        &o.confidence,
        &o.mask.map(|&m| if m { 1.0 } else { 0.0 }),
    ])
}

pub fn save_orders_map(o: &OrderMap, path: &Path) -> Result<(), crate::fpi::FpiError> {
    orders_image(o).save(path)
}

pub fn load_orders_map(path: &Path) -> Result<OrderMap, crate::fpi::FpiError> {
    let img = FpiImage::load(path)?;
    let mask = if img.channels >= 3 {
        img.channel(2).map(|&v| v > 0.5)
    } else {
        img.channel(0).map(|&v| v >= 0.0)
    };
    let mut o = OrderMap::from_orders(img.channel(0).map(|&v| v.round() as i32), &mask);
    if img.channels >= 2 {
        o.confidence = img.channel(1);
    }
    Ok(o)
}

pub fn save_phase(r: &Retrieved, path: &Path) -> Result<(), crate::fpi::FpiError> {
    let mask = r.phase.mask.map(|&m| if m { 1.0 } else { 0.0 });
    match &r.b_mod {
        Some(b) => FpiImage::from_channels(&[&r.phase.phi, &mask, b]).save(path),
        None => FpiImage::from_channels(&[&r.phase.phi, &mask]).save(path),
    }
}

pub fn load_phase(path: &Path) -> Result<WrappedPhase, crate::fpi::FpiError> {
    let img = FpiImage::load(path)?;
    let mask = if img.channels >= 2 {
        img.channel(1).map(|&v| v > 0.5)
    } else {
        Grid::filled(img.width, img.height, true)
    };
    Ok(WrappedPhase {
        phi: img.channel(0),
        mask,
    })
}

struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.join(name)
    }
}

/// Reference data built from a reference capture through the true rig.
pub fn capture_reference(rig: &Rig, steps: usize) -> Result<ReferenceData, PipelineError> {
    let record = render_reference(rig, steps).map_err(stage("reference"))?;
    ReferenceData::capture(rig, &record).map_err(stage("reference"))
}

/// Runs every stage and writes the artifact directory `config.output`.
/// Invalid configurations fail before anything is written.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    config.validate()?;
    let true_rig = config.load_rig()?;
    if config.unwrap == Unwrapping::Spu && config.views > true_rig.cameras.len() {
        return Err(PipelineError::InvalidConfig(format!(
            "{} views requested but the rig has {} cameras",
            config.views,
            true_rig.cameras.len()
        )));
    }
    let scene = config.load_scene(&true_rig)?;
    let cnn1 = match (&config.retrieval, &config.cnn1_weights) {
        (Retrieval::Cnn1, Some(p)) => Some(load_weights(p).map_err(stage("load"))?),
        _ => None,
    };
    let cnn2 = match (&config.unwrap, &config.cnn2_weights) {
        (Unwrapping::Cnn2, Some(p)) => Some(load_weights(p).map_err(stage("load"))?),
        _ => None,
    };

    let mut seeds = BTreeMap::new();
    let sim_seed = config.stage_seed("simulate");
    seeds.insert("simulate".to_string(), sim_seed);
    let rig = match config.calibration_jitter {
        Some(j) => {
            let s = config.stage_seed("calibration");
            seeds.insert("calibration".to_string(), s);
            true_rig.perturbed(j, s)
        }
        None => true_rig.clone(),
    };

    std::fs::create_dir_all(&config.output).map_err(stage("output"))?;
    let mut art = Artifacts {
        dir: config.output.clone(),
        names: Vec::new(),
    };
    std::fs::write(art.path("config.json"), config.to_json()).map_err(stage("output"))?;
    rig.save(&art.path("rig.json")).map_err(stage("output"))?;
    std::fs::write(art.path("scene.json"), scene.to_json()).map_err(stage("output"))?;

    // simulate
    let rendered = render_rig(&scene, &true_rig, config.steps, sim_seed).map_err(stage("simulate"))?;
    for (i, (s, _)) in rendered.iter().enumerate() {
        let refs: Vec<&Grid<f64>> = s.images.iter().collect();
        FpiImage::from_channels(&refs)
            .save(&art.path(&format!("cam{}_stack.fpi", i + 1)))
            .map_err(stage("simulate"))?;
    }
    let truth = rendered[0].1.clone();
    truth.save(&art.path("truth.fpi")).map_err(stage("simulate"))?;

    // retrieve
    let needed = match config.unwrap {
        Unwrapping::Spu => config.views,
        Unwrapping::Cnn2 => 2,
        _ => 1,
    };
    let mut phases = Vec::new();
    for (i, (s, _)) in rendered.iter().take(needed).enumerate() {
        let r = retrieve(s, config.retrieval, cnn1.as_ref()).map_err(stage("retrieve"))?;
        if let Some((m, d)) = &r.md {
            FpiImage::from_channels(&[m, d])
                .save(&art.path(&format!("cam{}_md.fpi", i + 1)))
                .map_err(stage("retrieve"))?;
        }
        save_phase(&r, &art.path(&format!("cam{}_phase.fpi", i + 1))).map_err(stage("retrieve"))?;
        phases.push(r);
    }
    let phi1 = phases[0].phase.clone();

    // unwrap
    let mut reference = None;
    let orders = match config.unwrap {
        Unwrapping::Spu => {
            let depth = match config.depth {
                DepthMode::Global => DepthRange::global(rig.volume),
                DepthMode::Adc => {
                    let s = config.stage_seed("adc_bootstrap");
                    seeds.insert("adc_bootstrap".to_string(), s);
                    let prev = bootstrap_depth(config, &scene, &true_rig, &rig, s, cnn1.as_ref())?;
                    save_grid(&art.path("adc_seed_depth.fpi"), &prev).map_err(stage("unwrap"))?;
                    adc_update(&prev, config.adc_half_width, rig.volume)
                }
            };
            let others: Vec<&WrappedPhase> = phases[1..].iter().map(|r| &r.phase).collect();
            spu_unwrap(&phi1, &others, &rig, &depth, &SpuConfig::views(config.views))
        }
        Unwrapping::Ref => {
            let r = capture_reference(&true_rig, config.steps)?;
            let o = reference_unwrap(&phi1, &r, config.periods);
            reference = Some(r);
            o
        }
        Unwrapping::Tpu => {
            let s = config.stage_seed("unit");
            seeds.insert("unit".to_string(), s);
            let (unit, _) = render_unit_stack(&scene, &true_rig.cameras[0], &true_rig.projector, config.steps, s)
                .map_err(stage("unwrap"))?;
            let unit = retrieve_ps(&unit, DEFAULT_MODULATION_THRESHOLD).map_err(stage("unwrap"))?;
            tpu_hierarchical(&phi1, &WrappedPhase::from(unit), config.periods)
        }
        Unwrapping::Cnn2 => {
            let r = capture_reference(&true_rig, config.steps)?;
            let o = infer_cnn2(
                cnn2.as_ref().expect("validated"),
                &rendered[0].0.images[0],
                &rendered[1].0.images[0],
                &r.stacks[0].images[0],
                &r.stacks[1].images[0],
                &r.k_ref,
                &r.mask,
                &phi1.mask,
                config.periods,
            )
            .map_err(stage("unwrap"))?;
            reference = Some(r);
            o
        }
    };
    save_orders_map(&orders, &art.path("orders.fpi")).map_err(stage("unwrap"))?;

    // triangulate
    let (abs_phase, abs_mask) = unwrap_apply(&phi1, &orders);
    let (depth, cloud) = reconstruct_camera_projector(&abs_phase, &abs_mask, &rig.cameras[0], &rig.projector);
    save_grid(&art.path("abs_phase.fpi"), &abs_phase).map_err(stage("triangulate"))?;
    save_grid(&art.path("depth.fpi"), &depth).map_err(stage("triangulate"))?;
    cloud.save_ply(&art.path("cloud.ply")).map_err(stage("triangulate"))?;

    // evaluate
    let mut report = evaluate_run(&truth, &phi1, &orders, &abs_phase, &abs_mask, &depth, reference.as_ref())
        .map_err(stage("evaluate"))?;
    if config.scene == SceneSource::Builtin(BuiltinScene::SpherePair) {
        let trim = scene.noise.sigma > 0.0 || scene.noise.quantize;
        match sphere_report(&cloud, &truth, trim) {
            Ok(s) => report.spheres = Some(s),
            Err(e) => report.notes.push(format!("sphere fit failed: {e}")),
        }
    }
    if let Some(e) = phase_and_depth_errors(&abs_phase, &truth.abs_phase, &depth, &truth.depth, &abs_mask.and(&truth.mask))
        .ok()
    {
        save_grid(&art.path("phase_error.fpi"), &e.phase_error).map_err(stage("evaluate"))?;
        save_grid(&art.path("depth_error.fpi"), &e.depth_error).map_err(stage("evaluate"))?;
        report.maps.insert("phase_error".into(), "phase_error.fpi".into());
        report.maps.insert("depth_error".into(), "depth_error.fpi".into());
    }
    report.save(&art.path("report.json")).map_err(stage("evaluate"))?;

    let mut inputs = BTreeMap::new();
    let mut add_input = |key: &str, p: &Option<PathBuf>| -> Result<(), PipelineError> {
        if let Some(p) = p {
            inputs.insert(key.to_string(), file_sha256(p).map_err(stage("manifest"))?);
        }
        Ok(())
    };
    add_input("rig", &config.rig)?;
    if let SceneSource::File(p) = &config.scene {
        add_input("scene", &Some(p.clone()))?;
    }
    add_input("cnn1_weights", &cnn1.as_ref().and(config.cnn1_weights.clone()))?;
    add_input("cnn2_weights", &cnn2.as_ref().and(config.cnn2_weights.clone()))?;
    let mut artifacts = BTreeMap::new();
    for name in &art.names {
        artifacts.insert(name.clone(), file_sha256(&art.dir.join(name)).map_err(stage("manifest"))?);
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.hash(),
        config: config.clone(),
        seeds,
        inputs,
        artifacts,
    };
    std::fs::write(
        art.dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(stage("manifest"))?;

    Ok(PipelineOutcome {
        report,
        manifest,
        orders,
        phase: phi1,
        truth,
        abs_phase,
        depth,
    })
}

/// Previous-frame depth for ADC: a second render of the scene, unwrapped with
/// three-view SPU (two views if the rig has two cameras) over the global
/// range and triangulated against the projector.
fn bootstrap_depth(
    config: &PipelineConfig,
    scene: &Scene,
    true_rig: &Rig,
    rig: &Rig,
    seed: u64,
    cnn1: Option<&Params<f32>>,
) -> Result<Grid<f64>, PipelineError> {
    let rendered = render_rig(scene, true_rig, config.steps, seed).map_err(stage("unwrap"))?;
    let views = rig.cameras.len().min(3);
    let phases = rendered
        .iter()
        .take(views)
        .map(|(s, _)| retrieve(s, config.retrieval, cnn1).map(|r| r.phase))
        .collect::<Result<Vec<_>, _>>()
        .map_err(stage("unwrap"))?;
    let others: Vec<&WrappedPhase> = phases[1..].iter().collect();
    let o = spu_unwrap(&phases[0], &others, rig, &DepthRange::global(rig.volume), &SpuConfig::views(views));
    let (abs, mask) = unwrap_apply(&phases[0], &o);
    Ok(reconstruct_camera_projector(&abs, &mask, &rig.cameras[0], &rig.projector).0)
}

/// Scores a camera-1 result against ground truth. Orders are compared with
/// the effective orders of the measured wrapped phase.
pub fn evaluate_run(
    truth: &GroundTruth,
    phi1: &WrappedPhase,
    orders: &OrderMap,
    abs_phase: &Grid<f64>,
    abs_mask: &Mask,
    depth: &Grid<f64>,
    reference: Option<&ReferenceData>,
) -> Result<EvalReport, crate::eval::EvalError> {
    let mut report = EvalReport::default();
    let eff = effective_orders(&truth.abs_phase, &truth.mask, phi1);
    report.orders = Some(order_error_rate(orders, &eff)?);
    let joint = phi1.mask.and(&truth.mask);
    if joint.count() > 0 {
        report.wrapped_phase_rmse = Some(wrapped_phase_rmse(&phi1.phi, &truth.wrapped, &joint)?);
    }
    let solved = abs_mask.and(&truth.mask);
    if solved.count() > 0 {
        let e = phase_and_depth_errors(abs_phase, &truth.abs_phase, depth, &truth.depth, &solved)?;
        report.phase_rmse = Some(e.phase_rmse);
        if e.depth_rmse.is_finite() {
            report.depth_rmse = Some(e.depth_rmse);
        }
    }
    if let Some(r) = reference {
        report.reference_band_violations = Some(reference_band_violations(truth, r));
    }
    Ok(report)
}

/// Pixels whose true absolute phase lies π or more from the reference's.
pub fn reference_band_violations(truth: &GroundTruth, reference: &ReferenceData) -> usize {
    truth
        .mask
        .indexed()
        .filter(|&(x, y, &m)| {
            m && (!*reference.mask.get(x, y)
                || (truth.abs_phase.get(x, y) - reference.abs_ref.get(x, y)).abs() >= std::f64::consts::PI)
        })
        .count()
}

/// Splits the cloud by the simulator's primitive labels (0 and 1 are the two
/// spheres) and fits both.
pub fn sphere_report(
    cloud: &PointCloud,
    truth: &GroundTruth,
    trim: bool,
) -> Result<SpherePairReport, crate::eval::EvalError> {
    let mut parts = [Vec::new(), Vec::new()];
    for (p, &(x, y)) in cloud.points.iter().zip(&cloud.pixels) {
        let label = *truth.primitive.get(x, y);
        if label == 0 || label == 1 {
            parts[label as usize].push(*p);
        }
    }
    SpherePairReport::against(&[&parts[0], &parts[1]], &SPHERE_PAIR_TRUTH, trim)
}
