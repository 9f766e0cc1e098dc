//! `fringe`: simulate captures, retrieve and unwrap phase, reconstruct,
//! train and run the CNNs, evaluate, and run whole pipelines.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fringe_core::eval::EvalReport;
use fringe_core::fpi::{load_grid, save_grid, FpiImage};
use fringe_core::geometry::{Rig, RigScale};
use fringe_core::grid::Grid;
use fringe_core::neural::{
    infer_cnn2, load_training_set, load_weights, save_weights, train, ModelSpec, NetworkKind, TrainConfig,
};
use fringe_core::pipeline::{
    builtin_scene, compare_methods, evaluate_run, four_method_configs, load_orders_map, load_phase, retrieve,
    run_pipeline, save_orders_map, save_phase, BuiltinScene, DepthMode, PipelineConfig, PipelineError, Retrieval,
    SceneSource, Unwrapping,
};
use fringe_core::reconstruct::reconstruct_camera_projector;
use fringe_core::simulator::{
    generate_dataset, render_reference, render_rig, render_unit_stack, DatasetRecipe, FringeStack, GroundTruth,
    NoiseModel, Scene,
};
use fringe_core::unwrap::{
    adc_update, reference_unwrap, spu_unwrap, tpu_hierarchical, unwrap_apply, DepthRange, ReferenceData, SpuConfig,
    WrappedPhase,
};
use fringe_core::phase::{retrieve_ps, DEFAULT_MODULATION_THRESHOLD};

#[derive(Parser)]
#[command(name = "fringe", version, about = "Fringe projection profilometry workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene through the rig, or generate a training dataset.
    Simulate(SimulateArgs),
    /// Wrapped phase of one camera's stack.
    Retrieve(RetrieveArgs),
    /// Fringe orders for camera 1.
    Unwrap(UnwrapArgs),
    /// Absolute phase, depth map and point cloud from phase and orders.
    Reconstruct(ReconstructArgs),
    /// Train CNN1 or CNN2 on a dataset manifest.
    Train(TrainArgs),
    /// Run a trained network.
    Infer(InferArgs),
    /// Score phase/orders/depth against simulator truth.
    Evaluate(EvaluateArgs),
    /// Run simulate → retrieve → unwrap → triangulate → evaluate.
    Pipeline(PipelineArgs),
    /// Run several pipelines on one scene and tabulate them.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Desk,
    Paper,
}

impl From<Scale> for RigScale {
    fn from(s: Scale) -> Self {
        match s {
            Scale::Desk => RigScale::Desk,
            Scale::Paper => RigScale::Paper,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    ReferencePlane,
    TiltedPlane,
    SpherePair,
    Staircase,
    Discontinuity,
}

impl From<Builtin> for BuiltinScene {
    fn from(b: Builtin) -> Self {
        match b {
            Builtin::ReferencePlane => BuiltinScene::ReferencePlane,
            Builtin::TiltedPlane => BuiltinScene::TiltedPlane,
            Builtin::SpherePair => BuiltinScene::SpherePair,
            Builtin::Staircase => BuiltinScene::Staircase,
            Builtin::Discontinuity => BuiltinScene::Discontinuity,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Net {
    Cnn1,
    Cnn2,
}

#[derive(Args)]
struct RigArgs {
    /// Calibration JSON (default: synthetic rig).
    #[arg(long)]
    rig: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    scale: Scale,
    #[arg(long, default_value_t = 12)]
    periods: u32,
}

impl RigArgs {
    fn load(&self) -> Result<Rig, CliError> {
        let rig = match &self.rig {
            Some(p) => Rig::load(p).map_err(|e| CliError::stage("load", e))?,
            None => Rig::synthetic(self.scale.into(), self.periods),
        };
        Ok(rig.with_periods(self.periods))
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    rig: RigArgs,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, value_enum)]
    builtin: Option<Builtin>,
    #[arg(long, default_value_t = 3)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian intensity noise σ (replaces the scene's noise model).
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Round intensities to 8 bits (with --noise-sigma).
    #[arg(long)]
    quantize: bool,
    /// Also write the reference-plane capture and its orders.
    #[arg(long)]
    reference: bool,
    /// Also write a unit-frequency stack for camera 1.
    #[arg(long)]
    unit: bool,
    /// Generate a dataset of this many samples instead of one capture.
    #[arg(long)]
    dataset: Option<usize>,
    /// Dataset recipe JSON.
    #[arg(long)]
    recipe: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RetrieveArgs {
    /// N-channel FPI1 fringe stack.
    #[arg(long)]
    stack: PathBuf,
    #[arg(long, value_enum, default_value = "ps")]
    method: RetrievalArg,
    /// CNN1 weights (for --method cnn1).
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    periods: u32,
    /// Phase file: wrapped phase, mask[, modulation].
    #[arg(long)]
    out: PathBuf,
    /// Optional (M, D) output.
    #[arg(long)]
    md_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RetrievalArg {
    Ps,
    Ft,
    Cnn1,
}

impl From<RetrievalArg> for Retrieval {
    fn from(r: RetrievalArg) -> Self {
        match r {
            RetrievalArg::Ps => Retrieval::Ps,
            RetrievalArg::Ft => Retrieval::Ft,
            RetrievalArg::Cnn1 => Retrieval::Cnn1,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum UnwrapArg {
    Spu,
    Ref,
    Tpu,
    Cnn2,
}

impl From<UnwrapArg> for Unwrapping {
    fn from(u: UnwrapArg) -> Self {
        match u {
            UnwrapArg::Spu => Unwrapping::Spu,
            UnwrapArg::Ref => Unwrapping::Ref,
            UnwrapArg::Tpu => Unwrapping::Tpu,
            UnwrapArg::Cnn2 => Unwrapping::Cnn2,
        }
    }
}

#[derive(Args)]
struct UnwrapArgs {
    #[arg(long, value_enum)]
    method: UnwrapArg,
    #[command(flatten)]
    rig: RigArgs,
    /// Camera-1 phase file.
    #[arg(long)]
    phase: PathBuf,
    /// Camera-2 (then camera-3) phase files for SPU.
    #[arg(long = "other")]
    others: Vec<PathBuf>,
    #[arg(long, default_value_t = 2)]
    views: usize,
    #[arg(long)]
    zmin: Option<f64>,
    #[arg(long)]
    zmax: Option<f64>,
    /// Previous depth map for per-pixel ADC windows.
    #[arg(long)]
    adc_depth: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    adc_half_width: f64,
    /// Reference capture directory written by `simulate --reference`.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Unit-frequency phase file for TPU.
    #[arg(long)]
    unit_phase: Option<PathBuf>,
    /// CNN2 weights and camera stacks.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    stack1: Option<PathBuf>,
    #[arg(long)]
    stack2: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    rig: RigArgs,
    #[arg(long)]
    phase: PathBuf,
    #[arg(long)]
    orders: PathBuf,
    /// Writes abs_phase.fpi, depth.fpi and cloud.ply here.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest.json.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    network: Net,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    filters: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Cosine-anneal the learning rate to this fraction of --lr.
    #[arg(long, default_value_t = 1.0)]
    final_lr_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Best-validation weights.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long, value_enum)]
    network: Net,
    #[arg(long)]
    weights: PathBuf,
    /// Camera-1 stack (first image is used).
    #[arg(long)]
    stack1: PathBuf,
    /// Camera-2 stack (CNN2).
    #[arg(long)]
    stack2: Option<PathBuf>,
    /// Reference capture directory (CNN2).
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    periods: u32,
    /// CNN1: phase file; CNN2: orders file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Seven-channel truth file written by `simulate`.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    phase: PathBuf,
    #[arg(long)]
    orders: PathBuf,
    /// Depth map (default: triangulate with --rig).
    #[arg(long)]
    depth: Option<PathBuf>,
    #[command(flatten)]
    rig: RigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: PipelineFlags,
}

/// Overrides for [`PipelineConfig`] fields.
#[derive(Args)]
struct PipelineFlags {
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    rig: Option<PathBuf>,
    #[arg(long, value_enum)]
    rig_scale: Option<Scale>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, value_enum)]
    builtin: Option<Builtin>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    periods: Option<u32>,
    #[arg(long, value_enum)]
    retrieval: Option<RetrievalArg>,
    #[arg(long, value_enum)]
    unwrap: Option<UnwrapArg>,
    #[arg(long)]
    views: Option<usize>,
    /// Use per-pixel ADC depth windows.
    #[arg(long)]
    adc: bool,
    #[arg(long)]
    adc_half_width: Option<f64>,
    #[arg(long)]
    cnn1_weights: Option<PathBuf>,
    #[arg(long)]
    cnn2_weights: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl PipelineFlags {
    fn apply(&self, mut c: PipelineConfig) -> PipelineConfig {
        if let Some(v) = &self.label {
            c.label = Some(v.clone());
        }
        if let Some(v) = &self.rig {
            c.rig = Some(v.clone());
        }
        if let Some(v) = self.rig_scale {
            c.rig_scale = v.into();
        }
        if let Some(v) = &self.scene {
            c.scene = SceneSource::File(v.clone());
        }
        if let Some(v) = self.builtin {
            c.scene = SceneSource::Builtin(v.into());
        }
        if let Some(s) = self.noise_sigma {
            c.noise = Some(NoiseModel { sigma: s, quantize: true });
        }
        if let Some(v) = self.steps {
            c.steps = v;
        }
        if let Some(v) = self.periods {
            c.periods = v;
        }
        if let Some(v) = self.retrieval {
            c.retrieval = v.into();
        }
        if let Some(v) = self.unwrap {
            c.unwrap = v.into();
        }
        if let Some(v) = self.views {
            c.views = v;
        }
        if self.adc {
            c.depth = DepthMode::Adc;
        }
        if let Some(v) = self.adc_half_width {
            c.adc_half_width = v;
        }
        if let Some(v) = &self.cnn1_weights {
            c.cnn1_weights = Some(v.clone());
        }
        if let Some(v) = &self.cnn2_weights {
            c.cnn2_weights = Some(v.clone());
        }
        if let Some(v) = &self.out {
            c.output = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c
    }
}

#[derive(Args)]
struct CompareArgs {
    /// Pipeline configs sharing one scene (repeatable).
    #[arg(long = "config")]
    configs: Vec<PathBuf>,
    /// Compare the four standard methods on the scene of --base.
    #[arg(long)]
    four_methods: bool,
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    cnn1_weights: Option<PathBuf>,
    #[arg(long)]
    cnn2_weights: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: msg.into(),
        }
    }

    fn stage(stage: &str, e: impl std::fmt::Display) -> Self {
        Self {
            code: 1,
            message: format!("{stage}: {e}"),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        Self {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn io<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::stage(stage, e)
}

fn load_stack(path: &Path, periods: u32) -> Result<FringeStack, CliError> {
    let img = FpiImage::load(path).map_err(io("load"))?;
    let images = (0..img.channels).map(|c| img.channel(c)).collect();
    FringeStack::new(images, periods, 0).map_err(io("load"))
}

fn save_stack(stack: &FringeStack, path: &Path) -> Result<(), CliError> {
    let refs: Vec<&Grid<f64>> = stack.images.iter().collect();
    FpiImage::from_channels(&refs).save(path).map_err(io("output"))
}

fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let rig = a.rig.load()?;
    std::fs::create_dir_all(&a.out).map_err(io("output"))?;
    if let Some(count) = a.dataset {
        let recipe = match &a.recipe {
            Some(p) => serde_json::from_str::<DatasetRecipe>(&std::fs::read_to_string(p).map_err(io("load"))?)
                .map_err(|e| CliError::usage(format!("recipe: {e}")))?,
            None => DatasetRecipe::default(),
        };
        let m = generate_dataset(count, &rig, &recipe, a.seed, &a.out).map_err(io("simulate"))?;
        println!("{} samples written to {}", m.samples.len(), a.out.display());
        return Ok(());
    }
    let mut scene = match (&a.scene, a.builtin) {
        (Some(p), None) => Scene::from_json(&std::fs::read_to_string(p).map_err(io("load"))?).map_err(io("load"))?,
        (None, Some(b)) => builtin_scene(b.into(), &rig),
        _ => return Err(CliError::usage("give exactly one of --scene or --builtin")),
    };
    if let Some(s) = a.noise_sigma {
        scene.noise = NoiseModel {
            sigma: s,
            quantize: a.quantize,
        };
    }
    rig.save(&a.out.join("rig.json")).map_err(io("output"))?;
    std::fs::write(a.out.join("scene.json"), scene.to_json()).map_err(io("output"))?;
    let rendered = render_rig(&scene, &rig, a.steps, a.seed).map_err(io("simulate"))?;
    for (i, (s, _)) in rendered.iter().enumerate() {
        save_stack(s, &a.out.join(format!("cam{}_stack.fpi", i + 1)))?;
    }
    rendered[0].1.save(&a.out.join("truth.fpi")).map_err(io("output"))?;
    if a.reference {
        let dir = a.out.join("reference");
        std::fs::create_dir_all(&dir).map_err(io("output"))?;
        let record = render_reference(&rig, a.steps).map_err(io("simulate"))?;
        let data = ReferenceData::capture(&rig, &record).map_err(io("simulate"))?;
        for (i, s) in record.stacks.iter().enumerate() {
            save_stack(s, &dir.join(format!("cam{}_stack.fpi", i + 1)))?;
        }
        fringe_core::fpi::save_orders(&dir.join("orders.fpi"), &data.k_ref).map_err(io("output"))?;
    }
    if a.unit {
        let (unit, _) = render_unit_stack(&scene, &rig.cameras[0], &rig.projector, a.steps, a.seed ^ 0x5555)
            .map_err(io("simulate"))?;
        save_stack(&unit, &a.out.join("cam1_unit_stack.fpi"))?;
    }
    println!("capture written to {}", a.out.display());
    Ok(())
}

fn load_reference(dir: &Path, periods: u32) -> Result<ReferenceData, CliError> {
    let stacks = (1..=2)
        .map(|i| load_stack(&dir.join(format!("cam{i}_stack.fpi")), periods))
        .collect::<Result<Vec<_>, _>>()?;
    let k = fringe_core::fpi::load_orders(&dir.join("orders.fpi")).map_err(io("load"))?;
    ReferenceData::from_orders(stacks, &k).map_err(io("load"))
}

fn cmd_retrieve(a: &RetrieveArgs) -> Result<(), CliError> {
    let method: Retrieval = a.method.into();
    if method == Retrieval::Cnn1 && a.weights.is_none() {
        return Err(CliError::usage("cnn1 retrieval requires --weights"));
    }
    let weights = match &a.weights {
        Some(p) if method == Retrieval::Cnn1 => Some(load_weights(p).map_err(io("load"))?),
        _ => None,
    };
    let stack = load_stack(&a.stack, a.periods)?;
    let r = retrieve(&stack, method, weights.as_ref()).map_err(io("retrieve"))?;
    save_phase(&r, &a.out).map_err(io("output"))?;
    if let (Some(p), Some((m, d))) = (&a.md_out, &r.md) {
        FpiImage::from_channels(&[m, d]).save(p).map_err(io("output"))?;
    }
    Ok(())
}

fn cmd_unwrap(a: &UnwrapArgs) -> Result<(), CliError> {
    let rig = a.rig.load()?;
    let periods = rig.projector.periods;
    let phi1 = load_phase(&a.phase).map_err(io("load"))?;
    let orders = match a.method {
        UnwrapArg::Spu => {
            if !(2..=3).contains(&a.views) || a.others.len() + 1 < a.views {
                return Err(CliError::usage("spu needs --views 2 or 3 and one --other phase per extra view"));
            }
            let others = a
                .others
                .iter()
                .map(|p| load_phase(p).map_err(io("load")))
                .collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&WrappedPhase> = others.iter().collect();
            let volume = (a.zmin.unwrap_or(rig.volume.0), a.zmax.unwrap_or(rig.volume.1));
            let depth = match &a.adc_depth {
                Some(p) => adc_update(&load_grid(p).map_err(io("load"))?, a.adc_half_width, volume),
                None => DepthRange::global(volume),
            };
            spu_unwrap(&phi1, &refs, &rig, &depth, &SpuConfig::views(a.views))
        }
        UnwrapArg::Ref => {
            let dir = a.reference.as_ref().ok_or_else(|| CliError::usage("ref unwrapping requires --reference"))?;
            reference_unwrap(&phi1, &load_reference(dir, periods)?, periods)
        }
        UnwrapArg::Tpu => {
            let p = a.unit_phase.as_ref().ok_or_else(|| CliError::usage("tpu requires --unit-phase"))?;
            tpu_hierarchical(&phi1, &load_phase(p).map_err(io("load"))?, periods)
        }
        UnwrapArg::Cnn2 => {
            let (Some(w), Some(s1), Some(s2), Some(r)) = (&a.weights, &a.stack1, &a.stack2, &a.reference) else {
                return Err(CliError::usage("cnn2 requires --weights, --stack1, --stack2 and --reference"));
            };
            cnn2_orders(w, s1, s2, r, &phi1, periods)?
        }
    };
    save_orders_map(&orders, &a.out).map_err(io("output"))
}

fn cnn2_orders(
    weights: &Path,
    s1: &Path,
    s2: &Path,
    reference: &Path,
    phi1: &WrappedPhase,
    periods: u32,
) -> Result<fringe_core::unwrap::OrderMap, CliError> {
    let params = load_weights(weights).map_err(io("load"))?;
    let (c1, c2) = (load_stack(s1, periods)?, load_stack(s2, periods)?);
    let r = load_reference(reference, periods)?;
    infer_cnn2(
        &params,
        &c1.images[0],
        &c2.images[0],
        &r.stacks[0].images[0],
        &r.stacks[1].images[0],
        &r.k_ref,
        &r.mask,
        &phi1.mask,
        periods,
    )
    .map_err(io("infer"))
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<(), CliError> {
    let rig = a.rig.load()?;
    let phi = load_phase(&a.phase).map_err(io("load"))?;
    let orders = load_orders_map(&a.orders).map_err(io("load"))?;
    let (abs, mask) = unwrap_apply(&phi, &orders);
    let (depth, cloud) = reconstruct_camera_projector(&abs, &mask, &rig.cameras[0], &rig.projector);
    std::fs::create_dir_all(&a.out).map_err(io("output"))?;
    save_grid(&a.out.join("abs_phase.fpi"), &abs).map_err(io("output"))?;
    save_grid(&a.out.join("depth.fpi"), &depth).map_err(io("output"))?;
    cloud.save_ply(&a.out.join("cloud.ply")).map_err(io("output"))?;
    println!("{} points", cloud.len());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let kind = match a.network {
        Net::Cnn1 => NetworkKind::Cnn1,
        Net::Cnn2 => NetworkKind::Cnn2,
    };
    let set = load_training_set(&a.dataset, kind).map_err(io("load"))?;
    let spec = match kind {
        NetworkKind::Cnn1 => ModelSpec::cnn1(a.filters),
        NetworkKind::Cnn2 => ModelSpec::cnn2(a.filters),
    };
    let mut cfg = TrainConfig {
        epochs: a.epochs,
        init_seed: a.seed,
        shuffle_seed: a.seed.wrapping_add(1),
        final_lr_fraction: a.final_lr_fraction,
        ..TrainConfig::default()
    };
    cfg.adam.lr = a.lr;
    let out = train(&spec, &set.train, &set.val, &cfg, |e| {
        eprintln!("epoch {} train {:.6} val {:.6}", e.epoch, e.train_loss, e.val_loss)
    })
    .map_err(io("train"))?;
    save_weights(&out.best, &a.out).map_err(io("output"))?;
    if let Some(p) = &a.loss_csv {
        out.curve.save_csv(p).map_err(io("output"))?;
    }
    println!("best epoch {}", out.best_epoch);
    Ok(())
}

fn cmd_infer(a: &InferArgs) -> Result<(), CliError> {
    match a.network {
        Net::Cnn1 => {
            let params = load_weights(&a.weights).map_err(io("load"))?;
            let stack = load_stack(&a.stack1, a.periods)?;
            let r = retrieve(&stack, Retrieval::Cnn1, Some(&params)).map_err(io("infer"))?;
            save_phase(&r, &a.out).map_err(io("output"))
        }
        Net::Cnn2 => {
            let (Some(s2), Some(r)) = (&a.stack2, &a.reference) else {
                return Err(CliError::usage("cnn2 requires --stack2 and --reference"));
            };
            let stack = load_stack(&a.stack1, a.periods)?;
            let ps = retrieve_ps(&stack, DEFAULT_MODULATION_THRESHOLD).map_err(io("infer"))?;
            let o = cnn2_orders(&a.weights, &a.stack1, s2, r, &WrappedPhase::from(ps), a.periods)?;
            save_orders_map(&o, &a.out).map_err(io("output"))
        }
    }
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let truth = GroundTruth::load(&a.truth).map_err(io("load"))?;
    let phi = load_phase(&a.phase).map_err(io("load"))?;
    let orders = load_orders_map(&a.orders).map_err(io("load"))?;
    let (abs, mask) = unwrap_apply(&phi, &orders);
    let depth = match &a.depth {
        Some(p) => load_grid(p).map_err(io("load"))?,
        None => {
            let rig = a.rig.load()?;
            reconstruct_camera_projector(&abs, &mask, &rig.cameras[0], &rig.projector).0
        }
    };
    let report: EvalReport = evaluate_run(&truth, &phi, &orders, &abs, &mask, &depth, None).map_err(io("evaluate"))?;
    report.save(&a.out).map_err(io("output"))?;
    println!("{}", report.to_json());
    Ok(())
}

fn cmd_pipeline(a: &PipelineArgs) -> Result<(), CliError> {
    let base = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let cfg = a.flags.apply(base);
    let out = run_pipeline(&cfg)?;
    println!("{}", out.report.to_json());
    Ok(())
}

fn cmd_compare(a: &CompareArgs) -> Result<(), CliError> {
    let configs = if a.four_methods {
        let (Some(b), Some(w1), Some(w2)) = (&a.base, &a.cnn1_weights, &a.cnn2_weights) else {
            return Err(CliError::usage("--four-methods requires --base, --cnn1-weights and --cnn2-weights"));
        };
        four_method_configs(&PipelineConfig::load(b)?, w1.clone(), w2.clone())
    } else {
        a.configs
            .iter()
            .map(|p| PipelineConfig::load(p))
            .collect::<Result<Vec<_>, _>>()?
    };
    let table = compare_methods(&configs, &a.out)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv).map_err(io("output"))?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Retrieve(a) => cmd_retrieve(a),
        Command::Unwrap(a) => cmd_unwrap(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Train(a) => cmd_train(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
