//! Burst → feature tensor: one-sided FFT magnitude plus a Morlet scalogram,
//! stacked row-wise per sensor channel; and seven scalar statistics.

mod cwt;
mod fft;
mod stats;
mod tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cwt::{cwt_scalogram, MorletBank, Scalogram};
pub use fft::{conjugate_asymmetry, fft_magnitude, full_spectrum, FftRow};
pub use stats::{stat_features, StatFeatureVector};
pub use tensor::{
    assemble_tensor, load_tensors, resample_linear, save_tensors, FeatureExtractor, FeatureTensor, TensorStandardizer,
};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("burst length {0} is odd; the one-sided spectrum needs an even length")]
    OddLength(usize),
    #[error("empty input")]
    Empty,
    #[error("signal is identically zero; {0} is undefined")]
    ZeroSignal(&'static str),
    #[error("FFT row belongs to burst {fft}, scalogram to burst {scalogram}")]
    Provenance { fft: u64, scalogram: u64 },
    #[error("shape: {0}")]
    Shape(String),
    #[error("invalid feature configuration: {0}")]
    Config(String),
    #[error("tensor cache: {0}")]
    Cache(#[from] fdd_autodiff::CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Number of wavelet scales S.
    pub scales: usize,
    /// Lowest center frequency; the highest is Nyquist.
    pub min_freq_hz: f64,
    /// Morlet center frequency ω0 (rad per unit scale).
    pub omega0: f64,
    /// Tensor width F.
    pub timesteps: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { scales: 32, min_freq_hz: 5.0, omega0: 6.0, timesteps: 256 }
    }
}

impl FeatureConfig {
    /// Rows per sensor channel: S scalogram rows plus the FFT row.
    pub fn rows_per_channel(&self) -> usize {
        self.scales + 1
    }
}
