//! Dual-path convolutional/recurrent feature extractor.
//!
//! Path 1 runs a convolution over the time axis of a feature tensor and feeds
//! the resulting sequence to an LSTM, keeping the final hidden state. Path 2
//! stacks conv → ReLU → batchnorm → max-pool blocks and ends in a dense
//! layer. The two outputs are concatenated.
//!
//! The trunk is trained with a temporary softmax head ([`train_clstm`]), then
//! frozen; [`extract_features`] runs it in evaluation mode.

mod model;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use fdd_autodiff::{AutodiffError, CheckpointError};

use crate::AdamSettings;

pub use model::{extract_features, BatchStats, ClstmModel, SoftmaxHead};
pub use train::{train_clstm, weighted_cross_entropy, ClstmCurves, ClstmEpoch, LabeledTensors, TrainedClstm};

#[derive(Debug, Error)]
pub enum ClstmError {
    #[error("invalid CLSTM configuration: {0}")]
    Config(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("model is not frozen; train or load it first")]
    NotFrozen,
    #[error("no training tensors")]
    Empty,
    #[error("label {label} outside {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (max |param| {max_abs_param:.3e})")]
    NonFinite { epoch: usize, batch: usize, max_abs_param: f64 },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// One path-2 block: conv1d(width) with `filters` outputs, then pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub filters: usize,
    pub width: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClstmTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamSettings,
    /// Weight each sample's cross-entropy by 1 / (its class's count).
    pub class_weighting: bool,
}

impl Default for ClstmTraining {
    fn default() -> Self {
        Self { epochs: 50, batch_size: 32, adam: AdamSettings::default(), class_weighting: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClstmConfig {
    pub path1_filters: usize,
    pub path1_width: usize,
    pub lstm_hidden: usize,
    pub blocks: Vec<ConvBlock>,
    pub dense: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub training: ClstmTraining,
    pub seed: u64,
}

impl Default for ClstmConfig {
    fn default() -> Self {
        Self {
            path1_filters: 32,
            path1_width: 9,
            lstm_hidden: 32,
            blocks: [16, 32, 64].iter().map(|&filters| ConvBlock { filters, width: 9, pool: 4 }).collect(),
            dense: 96,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            training: ClstmTraining::default(),
            seed: 0,
        }
    }
}

impl ClstmConfig {
    /// Length of the concatenated feature vector.
    pub fn feature_dim(&self) -> usize {
        self.lstm_hidden + self.dense
    }

    /// Path-2 lengths after each convolution and each pooling, for inputs
    /// with `timesteps` columns.
    pub fn path2_lengths(&self, timesteps: usize) -> Result<Vec<(usize, usize)>, ClstmError> {
        let mut len = timesteps;
        let mut out = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let conv = fdd_autodiff::conv_output_len(len, b.width)
                .ok_or_else(|| ClstmError::Config(format!("block {i}: width {} exceeds length {len}", b.width)))?;
            let pooled = fdd_autodiff::pool_output_len(conv, b.pool)
                .ok_or_else(|| ClstmError::Config(format!("block {i}: pool {} exceeds length {conv}", b.pool)))?;
            out.push((conv, pooled));
            len = pooled;
        }
        Ok(out)
    }

    pub fn validate(&self, timesteps: usize) -> Result<(), ClstmError> {
        let widths = [self.path1_filters, self.path1_width, self.lstm_hidden, self.dense];
        if widths.contains(&0) || self.blocks.iter().any(|b| b.filters == 0 || b.width == 0 || b.pool == 0) {
            return Err(ClstmError::Config("all widths must be positive".into()));
        }
        if self.blocks.is_empty() {
            return Err(ClstmError::Config("path 2 needs at least one block".into()));
        }
        if self.path1_width > timesteps {
            return Err(ClstmError::Config(format!(
                "path-1 width {} exceeds {timesteps} timesteps",
                self.path1_width
            )));
        }
        if !(self.bn_eps > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(ClstmError::Config("batchnorm eps must be positive and momentum in [0, 1]".into()));
        }
        if self.training.batch_size < 2 {
            return Err(ClstmError::Config("batch size must be at least 2".into()));
        }
        self.path2_lengths(timesteps).map(|_| ())
    }
}
