//! Wasserstein GAN with gradient penalty for minority-class bursts.
//!
//! The critic scores raw bursts; the generator is a five-layer dense
//! autoencoder from noise to a burst. [`train_wgan_gp`] alternates
//! `n_critic` critic updates with one generator update, and
//! [`balance_with_fakes`] tops up under-represented fault classes in the
//! training split with generated bursts.

mod balance;
mod loss;
mod nets;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use fdd_autodiff::{AutodiffError, CheckpointError};

use crate::dataset::ConditionClass;
use crate::AdamSettings;

pub use balance::balance_with_fakes;
pub use loss::{critic_loss, generator_loss, gradient_penalty, interpolate, CriticLossParts, PenaltyTerm};
pub use nets::{build_critic, ConvLstmCritic, Critic, GeneratorNet, MlpCritic};
pub use train::{train_wgan_gp, GanDiagnostics, GanEpoch, GanHistory};

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid GAN configuration: {0}")]
    Config(String),
    #[error("need at least {need} training bursts, have {have}")]
    TooFewSamples { have: usize, need: usize },
    #[error("shape: {0}")]
    Shape(String),
    #[error("non-finite loss at epoch {}: {}", .0.epoch, .0.summary())]
    NonFinite(Box<GanDiagnostics>),
    #[error("generator for {0} has not been trained")]
    Untrained(ConditionClass),
    #[error("no generator for {class}, which lacks {deficit} bursts")]
    MissingGenerator { class: ConditionClass, deficit: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
}

/// Critic architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CriticConfig {
    /// Blocks of conv1d → max-pool → LSTM; the last block's final hidden
    /// state feeds a scalar head. A pool of 1 disables pooling.
    ConvLstm { filters: Vec<usize>, width: usize, pools: Vec<usize>, lstm_hidden: usize },
    /// Dense layers with leaky-ReLU; no hidden layers gives a linear critic.
    Mlp { hidden: Vec<usize> },
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig::ConvLstm { filters: vec![16, 32, 64], width: 9, pools: vec![4, 4, 4], lstm_hidden: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    /// Latent and burst length.
    pub burst_len: usize,
    /// Gradient-penalty coefficient γ.
    pub gamma: f64,
    /// Critic updates per generator update.
    pub n_critic: usize,
    pub batch_size: usize,
    pub adam: AdamSettings,
    /// Outer iterations (one generator update each).
    pub epochs: usize,
    pub seed: u64,
    pub critic: CriticConfig,
    /// Floor on generator layer widths (matters for very short inputs).
    pub generator_min_width: usize,
    /// Decay of the exponential moving average of generator weights that is
    /// returned instead of the final iterate; `None` returns the iterate.
    pub generator_ema: Option<f64>,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            burst_len: 800,
            gamma: 10.0,
            n_critic: 5,
            batch_size: 32,
            adam: AdamSettings { lr: 1e-4, beta1: 0.0, beta2: 0.9, eps: 1e-8 },
            epochs: 1000,
            seed: 0,
            critic: CriticConfig::default(),
            generator_min_width: 8,
            generator_ema: Some(0.999),
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(GanError::Config(format!("gamma must be ≥ 0, got {}", self.gamma)));
        }
        if self.n_critic < 1 {
            return Err(GanError::Config("n_critic must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(GanError::Config("batch size must be at least 2".into()));
        }
        if self.burst_len == 0 {
            return Err(GanError::Config("burst length must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(GanError::Config(format!("Adam step size {}", self.adam.lr)));
        }
        if let Some(d) = self.generator_ema {
            if !(0.0..1.0).contains(&d) {
                return Err(GanError::Config(format!("generator averaging decay {d} outside [0, 1)")));
            }
        }
        if let CriticConfig::ConvLstm { filters, pools, width, lstm_hidden } = &self.critic {
            if filters.is_empty() || filters.len() != pools.len() {
                return Err(GanError::Config(format!("{} filter counts for {} pools", filters.len(), pools.len())));
            }
            if *width == 0 || *lstm_hidden == 0 || filters.contains(&0) || pools.contains(&0) {
                return Err(GanError::Config("critic widths must be positive".into()));
            }
        }
        Ok(())
    }
}
