//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The engine records a graph of [`Tensor`] operations and differentiates it
//! with [`backward`]. Local derivatives are themselves graph operations, so
//! gradients can be differentiated again; the gradient penalty of a
//! Wasserstein critic depends on this.

mod backward;
pub mod checkpoint;
pub mod gradcheck;
pub mod nn;
pub mod optim;
pub mod params;
mod tensor;

use thiserror::Error;

pub use backward::backward;
pub use checkpoint::{load_fddw, read_fddw, save_fddw, write_fddw};
pub use nn::{
    affine, batchnorm, conv1d, conv_output_len, lstm_sequence, lstm_step, maxpool1d, pool_output_len, Activation,
    BatchNormMode, LstmWeights, RunningStats,
};
pub use optim::{adam_update, Adam, AdamConfig, AdamState};
pub use params::{Bound, NamedTensor, ParamId, ParamStore};
pub use tensor::{is_grad_enabled, no_grad, with_grad_mode, Tensor};

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: window {window} exceeds input length {len}; output would be empty")]
    EmptyOutput { op: &'static str, len: usize, window: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not an FDDW container (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported FDDW version {0}")]
    UnsupportedVersion(u16),
    #[error("FDDW payload is truncated")]
    Truncated,
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("{0} too large for the FDDW format")]
    TooLarge(&'static str),
    #[error("missing or mis-shaped tensors: {0:?}")]
    Missing(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
