use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::data::cnn2_input;
use super::model::{build_model, forward, loss, loss_and_grad, ModelSpec, Params, TrainSample};
use super::tensor::Tensor;
use super::NeuralError;
use crate::grid::{Grid, Mask};
use crate::phase::{modulation, wrapped_phase, PhaseMaps};
use crate::unwrap::{OrderMap, UNDECIDED};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Seed for weight initialisation.
    pub init_seed: u64,
    /// Seed for the per-epoch shuffle.
    pub shuffle_seed: u64,
    /// Learning rate of the last epoch as a fraction of `adam.lr`, reached by
    /// cosine annealing; 1 keeps the rate constant.
    pub final_lr_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            adam: AdamConfig::default(),
            init_seed: 0,
            shuffle_seed: 1,
            final_lr_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean masked MSE over training samples, each taken just before its
    /// update (epoch 0: the untrained network).
    pub train_loss: f64,
    /// Mean masked MSE over validation samples; NaN without a validation split.
    pub val_loss: f64,
}

/// Per-epoch losses; epoch 0 is the untrained network.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub epochs: Vec<EpochLoss>,
}

impl LossCurve {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,train_loss,val_loss")?;
        for e in &self.epochs {
            writeln!(out, "{},{},{}", e.epoch, e.train_loss, e.val_loss)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss (training
    /// loss when there is no validation split).
    pub best: Params<f32>,
    pub best_epoch: usize,
    pub last: Params<f32>,
    pub curve: LossCurve,
}

/// Learning rate used during `epoch` (1-based).
pub fn epoch_lr(config: &TrainConfig, epoch: usize) -> f64 {
    let f = config.final_lr_fraction;
    if config.epochs <= 1 || f == 1.0 {
        return config.adam.lr;
    }
    let t = (epoch - 1) as f64 / (config.epochs - 1) as f64;
    config.adam.lr * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
}

fn mean_loss(params: &Params<f32>, set: &[TrainSample<f32>]) -> Result<f64, NeuralError> {
    if set.is_empty() {
        return Ok(f64::NAN);
    }
    let mut sum = 0.0;
    for s in set {
        sum += loss(params, std::slice::from_ref(s))?;
    }
    Ok(sum / set.len() as f64)
}

/// Adam with batch size 1, seeded per-epoch shuffling and best-validation
/// checkpointing. `progress` is called after every epoch.
pub fn train(
    spec: &ModelSpec,
    train_set: &[TrainSample<f32>],
    val_set: &[TrainSample<f32>],
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochLoss),
) -> Result<TrainOutcome, NeuralError> {
    if train_set.is_empty() {
        return Err(NeuralError::NoSupervisedPixels);
    }
    let mut params: Params<f32> = build_model(spec, config.init_seed)?;
    let mut adam = AdamState::new(&params, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    // checkpoints are ranked by validation loss, or by the exact training
    // loss of the current parameters when there is no validation split
    let score = |params: &Params<f32>, e: &EpochLoss| -> Result<f64, NeuralError> {
        if val_set.is_empty() {
            mean_loss(params, train_set)
        } else {
            Ok(e.val_loss)
        }
    };
    let first = EpochLoss {
        epoch: 0,
        train_loss: mean_loss(&params, train_set)?,
        val_loss: mean_loss(&params, val_set)?,
    };
    progress(&first);
    let mut best = (score(&params, &first)?, 0, params.clone());
    let mut curve = LossCurve { epochs: vec![first] };

    for epoch in 1..=config.epochs {
        adam.config.lr = epoch_lr(config, epoch);
        order.shuffle(&mut rng);
        let mut running = 0.0;
        for &i in &order {
            let (l, g) = loss_and_grad(&params, std::slice::from_ref(&train_set[i]))?;
            if !l.is_finite() {
                return Err(NeuralError::Diverged);
            }
            running += l;
            adam_step(&mut params, &g, &mut adam)?;
        }
        let e = EpochLoss {
            epoch,
            train_loss: running / train_set.len() as f64,
            val_loss: mean_loss(&params, val_set)?,
        };
        if !e.train_loss.is_finite() || !(val_set.is_empty() || e.val_loss.is_finite()) {
            return Err(NeuralError::Diverged);
        }
        progress(&e);
        curve.epochs.push(e);
        let s = score(&params, &e)?;
        if s < best.0 {
            best = (s, epoch, params.clone());
        }
    }
    Ok(TrainOutcome {
        best: best.2,
        best_epoch: best.1,
        last: params,
        curve,
    })
}

fn grid_to_tensor(g: &Grid<f64>) -> Tensor<f32> {
    Tensor::from_vec(g.height(), g.width(), 1, g.as_slice().iter().map(|&v| v as f32).collect())
}

/// CNN1 inference on a single fringe image. The outputs are read as `M`, `D`
/// scaled by `2/N`, so the modulation is their magnitude.
pub fn infer_cnn1(params: &Params<f32>, image: &Grid<f64>, threshold: f64) -> Result<PhaseMaps, NeuralError> {
    let out = forward(params, &grid_to_tensor(image))?;
    if out.c != 2 {
        return Err(NeuralError::Shape("CNN1 must have 2 output channels".into()));
    }
    let (w, h) = (image.width(), image.height());
    let m = Grid::from_vec(w, h, out.channel(0).iter().map(|&v| v as f64).collect());
    let d = Grid::from_vec(w, h, out.channel(1).iter().map(|&v| v as f64).collect());
    let (phi, valid) = wrapped_phase(&m, &d);
    // the outputs already carry the 2/N factor
    let (b_mod, strong) = modulation(&m, &d, 2, threshold);
    let mask = valid.and(&strong);
    Ok(PhaseMaps { m, d, phi, b_mod, mask })
}

/// CNN2 inference: `k = round(output · K)` clamped to `[0, K−1]` on `mask`.
#[allow(clippy::too_many_arguments)]
pub fn infer_cnn2(
    params: &Params<f32>,
    cam1: &Grid<f64>,
    cam2: &Grid<f64>,
    ref_cam1: &Grid<f64>,
    ref_cam2: &Grid<f64>,
    ref_orders: &Grid<i32>,
    ref_mask: &Mask,
    mask: &Mask,
    periods: u32,
) -> Result<OrderMap, NeuralError> {
    let input = cnn2_input(cam1, cam2, ref_cam1, ref_cam2, ref_orders, ref_mask, periods);
    let out = forward(params, &input)?;
    if out.c != 1 {
        return Err(NeuralError::Shape("CNN2 must have 1 output channel".into()));
    }
    let (w, h) = (cam1.width(), cam1.height());
    let mut orders = OrderMap::undecided(w, h);
    for (i, v) in out.data.iter().enumerate() {
        if mask.as_slice()[i] {
            let k = ((*v as f64) * periods as f64).round().clamp(0.0, periods as f64 - 1.0) as i32;
            orders.k.as_mut_slice()[i] = k;
            orders.mask.as_mut_slice()[i] = true;
            orders.confidence.as_mut_slice()[i] = ((*v as f64) * periods as f64 - k as f64).abs();
        } else {
            orders.k.as_mut_slice()[i] = UNDECIDED;
        }
    }
    Ok(orders)
}
