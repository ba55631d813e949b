//! Fault diagnosis of rotating machinery from short vibration bursts under
//! class imbalance and additive noise.
//!
//! The pipeline balances minority fault classes with a WGAN-GP generator,
//! turns each burst into a stacked FFT + Morlet scalogram tensor, extracts
//! deep features with a dual-path convolutional/recurrent network and
//! classifies them with a class-weighted extreme learning machine.
//! [`harness`] wires the stages together and runs the imbalance × noise grid.

pub mod clstm;
pub mod dataset;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod par;
pub mod welm;
pub mod wgan;

pub use dataset::{Burst, ConditionClass, LabeledDataset, ScenarioSpec};
pub use features::FeatureTensor;

/// Deterministic generator used for every seeded stream in the crate.
pub type SeedRng = rand_chacha::ChaCha8Rng;

/// Seeded generator for `seed`.
pub fn seeded(seed: u64) -> SeedRng {
    use rand::SeedableRng;
    SeedRng::seed_from_u64(seed)
}

/// Child seed for the stream named `label` under `parent`.
///
/// SHA-256 over the parent seed and the label, so sibling streams are
/// independent and adding a new label never shifts existing ones.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(parent.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Serializable Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl From<AdamSettings> for fdd_autodiff::AdamConfig {
    fn from(s: AdamSettings) -> Self {
        fdd_autodiff::AdamConfig { lr: s.lr, beta1: s.beta1, beta2: s.beta2, eps: s.eps }
    }
}
