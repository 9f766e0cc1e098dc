//! Multi-path residual CNNs for single-shot phase (CNN1) and fringe-order
//! (CNN2) prediction, with a small hand-written reverse-mode engine.
//!
//! Tensors are height × width × channel (channel fastest). Training runs in
//! `f32`; gradient checks run the same code in `f64`.

mod adam;
mod data;
mod io;
mod kernels;
pub mod layers;
mod model;
mod tensor;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use data::{cnn1_sample, cnn2_input, cnn2_sample, load_training_set, NetworkKind, TrainingSet};
pub use io::{load_weights, read_weights, save_weights, write_weights};
pub use model::{
    build_model, forward, forward_on_tape, loss, loss_and_grad, ConvParam, ModelSpec, Params, Tape, TrainSample,
};
pub use tensor::{Scalar, Tensor, TensorF};
pub use train::{epoch_lr, infer_cnn1, infer_cnn2, train, EpochLoss, LossCurve, TrainConfig, TrainOutcome};

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("{0}")]
    Shape(String),
    #[error("no supervised pixels")]
    NoSupervisedPixels,
    #[error("diverged")]
    Diverged,
    #[error("weights file: {0}")]
    Format(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Sim(#[from] crate::simulator::SimError),
}
