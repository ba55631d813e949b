use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::clstm::ClstmConfig;
use crate::dataset::SynthParams;
use crate::derive_seed;
use crate::features::FeatureConfig;
use crate::welm::ElmConfig;
use crate::wgan::GanConfig;

/// Where bursts come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Bursts synthesized on demand.
    Synth {
        #[serde(default)]
        params: SynthParams,
    },
    /// A pool of labeled bursts read from an FDDB file; scenarios sample
    /// from it without replacement.
    Fddb { path: PathBuf },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth { params: SynthParams::default() }
    }
}

/// Classifier on top of the deep features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Weighted ELM on standardized deep features.
    Welm,
    /// The softmax layer the trunk was trained with.
    Softmax,
}

/// Independent pipeline switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Toggles {
    /// Balance fault classes with WGAN-GP fakes.
    pub gan: bool,
    /// Balance fault classes with time-reversed, negated or re-noised copies.
    pub classic: bool,
    /// Class weighting in the ELM and in the trunk's training loss.
    pub weighting: bool,
    pub head: Head,
}

impl Default for Toggles {
    fn default() -> Self {
        Self { gan: true, classic: false, weighting: true, head: Head::Welm }
    }
}

impl Toggles {
    /// Sets a toggle by name (`gan`, `classic`, `weighting`, `head`); for
    /// `head`, `true` selects the ELM.
    pub fn set(&mut self, name: &str, on: bool) -> Result<(), HarnessError> {
        match name {
            "gan" => self.gan = on,
            "classic" => self.classic = on,
            "weighting" => self.weighting = on,
            "head" => self.head = if on { Head::Welm } else { Head::Softmax },
            _ => return Err(HarnessError::Config(format!("unknown toggle {name:?}"))),
        }
        Ok(())
    }
}

/// One imbalance × noise setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    /// Minority share in percent.
    pub alpha: f64,
    /// Requested SNR in dB; `None` leaves bursts clean.
    pub snr_db: Option<f64>,
}

impl GridPoint {
    pub fn label(&self) -> String {
        match self.snr_db {
            Some(s) => format!("alpha={}/snr={}", self.alpha, s),
            None => format!("alpha={}/clean", self.alpha),
        }
    }

    pub fn snr_label(&self) -> String {
        self.snr_db.map_or_else(|| "clean".to_string(), |s| s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub alphas: Vec<f64>,
    /// SNR levels in dB; `null` means no added noise.
    pub snrs: Vec<Option<f64>>,
    /// Bursts per scenario.
    pub total: usize,
    pub repetitions: usize,
    pub folds: usize,
    /// Run only the first this-many test folds of each repetition.
    pub max_folds: Option<usize>,
    pub toggles: Toggles,
    pub features: FeatureConfig,
    pub gan: GanConfig,
    pub clstm: ClstmConfig,
    pub elm: ElmConfig,
    /// Fault classes short of balance by at most this many bursts are left
    /// as they are rather than getting their own generator.
    pub balance_tolerance: usize,
    /// Write model checkpoints next to each run record.
    pub save_checkpoints: bool,
    /// Emit SVG heatmaps alongside the grid CSVs.
    pub heatmaps: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: DataSource::default(),
            alphas: vec![4.0, 1.0, 0.25],
            snrs: vec![Some(10.0), Some(50.0), Some(100.0)],
            total: 3000,
            repetitions: 3,
            folds: 5,
            max_folds: None,
            toggles: Toggles::default(),
            features: FeatureConfig::default(),
            gan: GanConfig::default(),
            clstm: ClstmConfig::default(),
            elm: ElmConfig::default(),
            balance_tolerance: 2,
            save_checkpoints: false,
            heatmaps: true,
            seed: 0,
        }
    }
}

/// Settings that change a run's result; grid lists and repetition counts
/// are excluded so adding a grid point leaves existing runs' keys intact.
#[derive(Serialize)]
struct RunIdentity<'a> {
    source: &'a DataSource,
    total: usize,
    folds: usize,
    toggles: &'a Toggles,
    features: &'a FeatureConfig,
    gan: &'a GanConfig,
    clstm: &'a ClstmConfig,
    elm: &'a ElmConfig,
    balance_tolerance: usize,
    seed: u64,
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("config JSON: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.alphas.is_empty() || self.snrs.is_empty() {
            return bad("the grid needs at least one alpha and one SNR".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(a.is_finite() && **a > 0.0 && **a <= 5.0)) {
            return bad(format!("alpha {a} outside (0, 5]"));
        }
        if let Some(s) = self.snrs.iter().flatten().find(|s| !s.is_finite()) {
            return bad(format!("SNR {s} dB"));
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.folds < 2 {
            return bad(format!("need at least 2 folds, got {}", self.folds));
        }
        if self.max_folds == Some(0) {
            return bad("max_folds must be at least 1".into());
        }
        if self.total == 0 {
            return bad("total burst count is zero".into());
        }
        if let DataSource::Synth { params } = &self.source {
            params.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if self.toggles.gan {
            self.gan.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        self.clstm.validate(self.features.timesteps).map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.elm.hidden == 0 || !(self.elm.c > 0.0) {
            return bad("ELM needs a positive hidden size and C".into());
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<GridPoint> {
        self.alphas
            .iter()
            .flat_map(|&alpha| self.snrs.iter().map(move |&snr_db| GridPoint { alpha, snr_db }))
            .collect()
    }

    /// Test folds run per repetition.
    pub fn test_folds(&self) -> usize {
        self.max_folds.map_or(self.folds, |m| m.min(self.folds))
    }

    /// Hash of everything that influences a run's outcome.
    pub fn run_hash(&self) -> String {
        let id = RunIdentity {
            source: &self.source,
            total: self.total,
            folds: self.folds,
            toggles: &self.toggles,
            features: &self.features,
            gan: &self.gan,
            clstm: &self.clstm,
            elm: &self.elm,
            balance_tolerance: self.balance_tolerance,
            seed: self.seed,
        };
        sha_hex(serde_json::to_string(&id).expect("identity serializes").as_bytes())
    }

    /// Hash of the whole resolved configuration.
    pub fn full_hash(&self) -> String {
        sha_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Seed streams for one run, derived master → grid point → repetition →
/// fold → stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    /// Shared by every fold of a repetition: the materialized dataset.
    pub scenario: u64,
    pub noise: u64,
    pub split: u64,
    /// Per fold.
    pub fold: u64,
}

impl RunSeeds {
    pub fn new(master: u64, point: &GridPoint, repetition: usize, fold: usize) -> Self {
        let point_seed = derive_seed(master, &format!("point/{}", point.label()));
        let rep = derive_seed(point_seed, &format!("rep/{repetition}"));
        Self {
            scenario: derive_seed(rep, "scenario"),
            noise: derive_seed(rep, "noise"),
            split: derive_seed(rep, "split"),
            fold: derive_seed(rep, &format!("fold/{fold}")),
        }
    }

    pub fn stage(&self, name: &str) -> u64 {
        derive_seed(self.fold, name)
    }
}
