//! Labeled vibration bursts: synthesis, the FDDB flat format, additive noise,
//! imbalance scenarios and stratified folds.

mod fddb;
mod noise;
mod scenario;
mod split;
mod synth;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fddb::{ingest_flat, read_fddb, write_fddb, FddbContents, IngestManifest, LabelEntry};
pub use noise::{add_awgn, apply_awgn, classic_augment, measured_snr_db, ClassicAugment, ClassicKind};
pub use scenario::{build_scenario, BurstPool, BurstSource, ScenarioSpec};
pub use split::{assign_fold_splits, kfold_split};
pub use synth::{synthesize_burst, SynthParams, Synthesizer};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid synthesizer parameter {name} = {value}; must be positive and finite")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("source cannot supply {requested} bursts of class {class} ({available} available)")]
    Shortfall { class: ConditionClass, requested: usize, available: usize },
    #[error("burst {id} has zero power; SNR is undefined")]
    ZeroPower { id: u64 },
    #[error("burst {id} contains non-finite samples")]
    NonFinite { id: u64 },
    #[error("class {class} has {count} bursts, fewer than k = {k}")]
    TooFewForFolds { class: ConditionClass, count: usize, k: usize },
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("not an FDDB file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported FDDB version {0}")]
    UnsupportedVersion(u16),
    #[error("FDDB payload truncated")]
    Truncated,
    #[error("label id {0} is not in the manifest")]
    UnknownLabel(u16),
    #[error("malformed FDDB header: {0}")]
    BadHeader(String),
    #[error("inconsistent bursts: {0}")]
    Inconsistent(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl DatasetError {
    /// Stable numeric code distinguishing file-format failures.
    pub fn code(&self) -> u8 {
        match self {
            DatasetError::BadMagic(_) => 10,
            DatasetError::UnsupportedVersion(_) => 11,
            DatasetError::Truncated => 12,
            DatasetError::UnknownLabel(_) => 13,
            DatasetError::BadHeader(_) => 14,
            DatasetError::Io(_) => 15,
            _ => 1,
        }
    }
}

/// Bearing condition. `Out3` is the designated minority of the imbalance
/// scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionClass {
    Health,
    Inner,
    Ball,
    Out1,
    Out2,
    Out3,
}

impl ConditionClass {
    pub const ALL: [ConditionClass; 6] = [
        ConditionClass::Health,
        ConditionClass::Inner,
        ConditionClass::Ball,
        ConditionClass::Out1,
        ConditionClass::Out2,
        ConditionClass::Out3,
    ];
    pub const COUNT: usize = 6;
    pub const MINORITY: ConditionClass = ConditionClass::Out3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ConditionClass::Health => "health",
            ConditionClass::Inner => "inner",
            ConditionClass::Ball => "ball",
            ConditionClass::Out1 => "out1",
            ConditionClass::Out2 => "out2",
            ConditionClass::Out3 => "out3",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == s)
    }

    pub fn is_fault(self) -> bool {
        self != ConditionClass::Health
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

impl fmt::Display for ConditionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a burst came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    /// Drawn from a trained generator.
    Generated,
    /// Flipped, negated or re-noised copy of a real burst.
    Augmented,
}

/// One fixed-length vibration window.
///
/// Samples are stored channel-major: channel `c` occupies
/// `samples[c * len .. (c + 1) * len]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Burst {
    pub id: u64,
    pub label: ConditionClass,
    pub channels: usize,
    pub sample_rate: f64,
    pub samples: Vec<f64>,
    pub origin: Origin,
}

impl Burst {
    pub fn new(
        id: u64,
        label: ConditionClass,
        channels: usize,
        sample_rate: f64,
        samples: Vec<f64>,
    ) -> Result<Self, DatasetError> {
        if channels == 0 || samples.is_empty() || samples.len() % channels != 0 {
            return Err(DatasetError::Inconsistent(format!(
                "burst {id}: {} samples over {channels} channels",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::NonFinite { id });
        }
        Ok(Self { id, label, channels, sample_rate, samples, origin: Origin::Real })
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.samples.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.len();
        &self.samples[c * n..(c + 1) * n]
    }

    /// Mean squared sample value over all channels.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }

    pub fn with_samples(&self, samples: Vec<f64>, origin: Origin) -> Burst {
        debug_assert_eq!(samples.len(), self.samples.len());
        Burst { samples, origin, ..self.clone() }
    }
}

pub(crate) fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Split membership of one burst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Unassigned,
    Train,
    Val,
    Test,
    Fold(usize),
}

/// Bursts in a stable order plus their split tags.
#[derive(Debug, Clone, Default)]
pub struct LabeledDataset {
    pub bursts: Vec<Burst>,
    pub splits: Vec<Split>,
}

impl LabeledDataset {
    pub fn new(bursts: Vec<Burst>) -> Self {
        let splits = vec![Split::Unassigned; bursts.len()];
        Self { bursts, splits }
    }

    pub fn len(&self) -> usize {
        self.bursts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bursts.is_empty()
    }

    /// Per-class counts (indexed by [`ConditionClass::index`]) among bursts
    /// whose split satisfies `keep`.
    pub fn class_counts_where(&self, keep: impl Fn(Split) -> bool) -> [usize; ConditionClass::COUNT] {
        let mut counts = [0; ConditionClass::COUNT];
        for (b, s) in self.bursts.iter().zip(&self.splits) {
            if keep(*s) {
                counts[b.label.index()] += 1;
            }
        }
        counts
    }

    pub fn class_counts(&self) -> [usize; ConditionClass::COUNT] {
        self.class_counts_where(|_| true)
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn bursts_of(&self, split: Split) -> Vec<&Burst> {
        self.bursts.iter().zip(&self.splits).filter(|(_, s)| **s == split).map(|(b, _)| b).collect()
    }

    pub fn next_id(&self) -> u64 {
        self.bursts.iter().map(|b| b.id + 1).max().unwrap_or(0)
    }

    /// Appends bursts to the training split, renumbering their ids after the
    /// current maximum.
    pub fn push_train(&mut self, bursts: impl IntoIterator<Item = Burst>) {
        let mut id = self.next_id();
        for mut b in bursts {
            b.id = id;
            id += 1;
            self.bursts.push(b);
            self.splits.push(Split::Train);
        }
    }

    /// How many bursts each fault class lacks in the training split relative
    /// to the largest fault class. Classes without training bursts are
    /// skipped.
    pub fn fault_deficits(&self) -> Vec<(ConditionClass, usize)> {
        let counts = self.class_counts_where(|s| s == Split::Train);
        let target = ConditionClass::ALL.iter().filter(|c| c.is_fault()).map(|c| counts[c.index()]).max().unwrap_or(0);
        ConditionClass::ALL
            .iter()
            .filter(|c| c.is_fault() && counts[c.index()] > 0 && counts[c.index()] < target)
            .map(|&c| (c, target - counts[c.index()]))
            .collect()
    }

    /// Common burst length, channel count and sample rate, or an error if
    /// bursts disagree.
    pub fn geometry(&self) -> Result<(usize, usize, f64), DatasetError> {
        let first = self.bursts.first().ok_or_else(|| DatasetError::Inconsistent("empty dataset".into()))?;
        let g = (first.len(), first.channels, first.sample_rate);
        for b in &self.bursts {
            if (b.len(), b.channels, b.sample_rate) != g {
                return Err(DatasetError::Inconsistent(format!(
                    "burst {} is {}×{} at {} Hz, expected {}×{} at {} Hz",
                    b.id,
                    b.channels,
                    b.len(),
                    b.sample_rate,
                    g.1,
                    g.0,
                    g.2
                )));
            }
        }
        Ok(g)
    }
}
