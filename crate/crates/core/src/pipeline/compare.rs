use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{run_pipeline, DepthMode, PipelineConfig, PipelineError, Retrieval, Unwrapping};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub order_error_rate: f64,
    pub wrong: usize,
    pub decided: usize,
    pub undecided_fraction: f64,
    pub wrapped_phase_rmse: Option<f64>,
    pub phase_rmse: Option<f64>,
    pub depth_rmse: Option<f64>,
    pub reference_band_violations: Option<usize>,
    /// Artifact directory of this row's run.
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

impl ComparisonTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "method,order_error_rate,wrong,decided,undecided_fraction,wrapped_phase_rmse,phase_rmse,depth_rmse,reference_band_violations"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.method,
                r.order_error_rate,
                r.wrong,
                r.decided,
                r.undecided_fraction,
                opt(&r.wrapped_phase_rmse),
                opt(&r.phase_rmse),
                opt(&r.depth_rmse),
                opt(&r.reference_band_violations)
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

/// Everything that determines the simulated capture.
fn scene_key(c: &PipelineConfig) -> String {
    serde_json::to_string(&(
        &c.rig,
        c.rig_scale,
        &c.scene,
        &c.noise,
        c.steps,
        c.periods,
        c.seed,
        &c.calibration_jitter,
    ))
    .expect("key serializes")
}

/// The four measurement methods compared on one scene: PS with three-view
/// SPU and adaptive depth windows, PS with two-view SPU and the global depth
/// constraint, PS with reference-plane unwrapping, and CNN1 + CNN2.
pub fn four_method_configs(base: &PipelineConfig, cnn1: PathBuf, cnn2: PathBuf) -> Vec<PipelineConfig> {
    let with = |label: &str, retrieval, unwrap, views, depth| PipelineConfig {
        label: Some(label.to_string()),
        retrieval,
        unwrap,
        views,
        depth,
        ..base.clone()
    };
    vec![
        with("ps+spu3v+adc", Retrieval::Ps, Unwrapping::Spu, 3, DepthMode::Adc),
        with("ps+spu2v+depth", Retrieval::Ps, Unwrapping::Spu, 2, DepthMode::Global),
        with("ps+ref", Retrieval::Ps, Unwrapping::Ref, 2, DepthMode::Global),
        PipelineConfig {
            cnn1_weights: Some(cnn1),
            cnn2_weights: Some(cnn2),
            ..with("cnn1+cnn2", Retrieval::Cnn1, Unwrapping::Cnn2, 2, DepthMode::Global)
        },
    ]
}

/// Runs every config on the same simulated scene (each into its own
/// sub-directory of `out_dir`) and writes `comparison.csv` and
/// `comparison.json`.
pub fn compare_methods(configs: &[PipelineConfig], out_dir: &Path) -> Result<ComparisonTable, PipelineError> {
    if configs.len() < 2 {
        return Err(PipelineError::InvalidConfig("compare needs at least two configs".into()));
    }
    let key = scene_key(&configs[0]);
    if configs.iter().any(|c| scene_key(c) != key) {
        return Err(PipelineError::InvalidConfig("configs do not share one simulated scene".into()));
    }
    for c in configs {
        c.validate()?;
    }
    let mut rows = Vec::new();
    for (i, c) in configs.iter().enumerate() {
        let name = c.name();
        let safe: String = name
            .chars()
            .map(|ch| if ch.is_ascii_alphanumeric() || ch == '-' { ch } else { '_' })
            .collect();
        let cfg = PipelineConfig {
            output: out_dir.join(format!("{:02}_{safe}", i + 1)),
            ..c.clone()
        };
        let out = run_pipeline(&cfg)?;
        let o = out.report.orders.expect("pipeline reports orders");
        rows.push(ComparisonRow {
            method: name,
            order_error_rate: o.rate,
            wrong: o.wrong,
            decided: o.decided,
            undecided_fraction: o.undecided_fraction,
            wrapped_phase_rmse: out.report.wrapped_phase_rmse,
            phase_rmse: out.report.phase_rmse,
            depth_rmse: out.report.depth_rmse,
            reference_band_violations: out.report.reference_band_violations,
            output: cfg.output,
        });
    }
    let table = ComparisonTable { rows };
    let io = |e: std::io::Error| PipelineError::Stage {
        stage: "compare",
        message: e.to_string(),
    };
    let mut csv = Vec::new();
    table.write_csv(&mut csv).map_err(io)?;
    std::fs::write(out_dir.join("comparison.csv"), csv).map_err(io)?;
    std::fs::write(out_dir.join("comparison.json"), table.to_json()).map_err(io)?;
    Ok(table)
}
