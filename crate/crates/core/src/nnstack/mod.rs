//! Miniature differentiable network stack: dense tensors, reverse-mode
//! autodiff, the three cascaded sub-networks plus the single-U-Net baseline,
//! Adam, training, checkpoints, and the finite-difference gradient checker.
//!
//! Training arithmetic is 32-bit; the gradient checker instantiates the same
//! ops in 64-bit.

mod adam;
mod checkpoint;
mod graph;
pub mod gradcheck;
mod infer;
mod nets;
mod scalar;
mod tensor;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use graph::{Graph, NodeId};
pub use infer::{infer, predict_chromaticity, InferMode};
pub use nets::{
    bind_named_params, bind_params, forward_net, BoundParams, Network, Param, Role,
    SIMPLEX_HEAD_EPS,
};
pub use scalar::Scalar;
pub use tensor::{pair_to_tensor, raster_to_tensor, tensor_to_raster, Tensor};
pub use train::{
    train, write_metrics_csv, LossWeights, ModelBundle, StepMetrics, TrainConfig, TrainMode,
    TrainOutput,
};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("role mismatch: {0}")]
    RoleMismatch(String),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Loss(#[from] crate::losses::LossError),
    #[error(transparent)]
    Image(#[from] crate::imgcore::ImageError),
    #[error(transparent)]
    Physsep(#[from] crate::physsep::PhyssepError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, NnError>;
