//! Training examples built from a generated dataset.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::TrainSample;
use super::tensor::Tensor;
use super::NeuralError;
use crate::grid::{Grid, Mask};
use crate::simulator::{load_sample, DatasetManifest, SampleData, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    Cnn1,
    Cnn2,
}

fn stack_channels(channels: &[&Grid<f64>]) -> Tensor<f32> {
    let (w, h) = (channels[0].width(), channels[0].height());
    let c = channels.len();
    let mut data = Vec::with_capacity(w * h * c);
    for i in 0..w * h {
        for ch in channels {
            data.push(ch.as_slice()[i] as f32);
        }
    }
    Tensor::from_vec(h, w, c, data)
}

/// CNN1: first fringe image in, `((2/N)M, (2/N)D)` out, supervised on `mask`.
pub fn cnn1_sample(image: &Grid<f64>, m_label: &Grid<f64>, d_label: &Grid<f64>, mask: &Mask) -> TrainSample<f32> {
    TrainSample {
        input: stack_channels(&[image]),
        target: stack_channels(&[m_label, d_label]),
        mask: mask.as_slice().to_vec(),
    }
}

/// CNN2 input: camera-1 and camera-2 first fringe images, the reference
/// plane's first images from both cameras, and the reference orders scaled
/// by `1/K` (0 where the reference is masked).
pub fn cnn2_input(
    cam1: &Grid<f64>,
    cam2: &Grid<f64>,
    ref_cam1: &Grid<f64>,
    ref_cam2: &Grid<f64>,
    ref_orders: &Grid<i32>,
    ref_mask: &Mask,
    periods: u32,
) -> Tensor<f32> {
    let k_ref = Grid::from_fn(ref_orders.width(), ref_orders.height(), |x, y| {
        if *ref_mask.get(x, y) {
            *ref_orders.get(x, y) as f64 / periods as f64
        } else {
            0.0
        }
    });
    stack_channels(&[cam1, cam2, ref_cam1, ref_cam2, &k_ref])
}

/// CNN2 example; the target is `k/K` on pixels where both the scene and the
/// reference orders are known.
pub fn cnn2_sample(sample: &SampleData, reference: &SampleData, periods: u32) -> TrainSample<f32> {
    let input = cnn2_input(
        &sample.stacks[0].images[0],
        &sample.stacks[1].images[0],
        &reference.stacks[0].images[0],
        &reference.stacks[1].images[0],
        &reference.truth.orders,
        &reference.truth.mask,
        periods,
    );
    let t = &sample.truth;
    let target = Grid::from_fn(t.orders.width(), t.orders.height(), |x, y| {
        (*t.orders.get(x, y)).max(0) as f64 / periods as f64
    });
    TrainSample {
        input,
        target: stack_channels(&[&target]),
        mask: t.mask.and(&reference.truth.mask).as_slice().to_vec(),
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub kind: NetworkKind,
    pub periods: u32,
    pub steps: usize,
    pub train: Vec<TrainSample<f32>>,
    pub val: Vec<TrainSample<f32>>,
}

/// Loads every non-reference sample of the manifest as a training (or
/// validation) example for `kind`. Samples without supervised pixels are
/// skipped.
pub fn load_training_set(manifest_path: &Path, kind: NetworkKind) -> Result<TrainingSet, NeuralError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let reference = load_sample(dir, &manifest, manifest.reference())?;
    if kind == NetworkKind::Cnn2 && reference.stacks.len() < 2 {
        return Err(NeuralError::Dataset("CNN2 needs two cameras".into()));
    }
    let mut set = TrainingSet {
        kind,
        periods: manifest.periods,
        steps: manifest.steps,
        train: Vec::new(),
        val: Vec::new(),
    };
    for record in manifest.samples.iter().filter(|r| !r.reference) {
        let data = load_sample(dir, &manifest, record)?;
        let sample = match kind {
            NetworkKind::Cnn1 => cnn1_sample(&data.stacks[0].images[0], &data.m_label, &data.d_label, &data.truth.mask),
            NetworkKind::Cnn2 => cnn2_sample(&data, &reference, manifest.periods),
        };
        if !sample.mask.iter().any(|&m| m) {
            continue;
        }
        match record.split {
            Split::Train => set.train.push(sample),
            Split::Val => set.val.push(sample),
        }
    }
    if set.train.is_empty() {
        return Err(NeuralError::Dataset("no training samples".into()));
    }
    Ok(set)
}
