//! Imbalance scenarios: class shares, per-class counts and materialization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::synth::{synthesize_burst, Synthesizer};
use super::{Burst, ConditionClass, DatasetError, LabeledDataset};
use crate::{derive_seed, seeded};

/// Class-share recipe of one scenario. Shares are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub total: usize,
    pub alpha: f64,
    pub shares: BTreeMap<ConditionClass, f64>,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl ScenarioSpec {
    /// The standard pattern: health `80 − α`, four fault classes at 5 %,
    /// `out3` at `α`.
    pub fn standard(alpha: f64, total: usize, snr_db: Option<f64>, seed: u64) -> Self {
        let mut shares = BTreeMap::new();
        for c in ConditionClass::ALL {
            let s = match c {
                ConditionClass::Health => 80.0 - alpha,
                ConditionClass::Out3 => alpha,
                _ => 5.0,
            };
            shares.insert(c, s);
        }
        Self { total, alpha, shares, snr_db, seed }
    }

    pub fn share(&self, c: ConditionClass) -> f64 {
        self.shares.get(&c).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.total == 0 {
            return Err(DatasetError::InvalidScenario("total burst count is zero".into()));
        }
        for (c, s) in &self.shares {
            if !(s.is_finite() && *s >= 0.0) {
                return Err(DatasetError::InvalidScenario(format!("share of {c} is {s}")));
            }
        }
        let sum: f64 = self.shares.values().sum();
        if (sum - 100.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidScenario(format!("shares sum to {sum}, not 100")));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(DatasetError::InvalidScenario(format!("snr {snr} dB")));
            }
        }
        Ok(())
    }

    /// Per-class counts: floor of `share × total / 100`, then the leftover
    /// bursts go to the largest fractional parts (ties in class order).
    pub fn class_counts(&self) -> Result<[usize; ConditionClass::COUNT], DatasetError> {
        self.validate()?;
        let mut counts = [0usize; ConditionClass::COUNT];
        let mut fracs = Vec::with_capacity(ConditionClass::COUNT);
        for c in ConditionClass::ALL {
            let mut raw = self.share(c) * self.total as f64 / 100.0;
            if (raw - raw.round()).abs() < 1e-9 {
                raw = raw.round();
            }
            counts[c.index()] = raw.floor() as usize;
            fracs.push((raw - raw.floor(), c.index()));
        }
        let assigned: usize = counts.iter().sum();
        let mut left = self.total.saturating_sub(assigned);
        fracs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, i) in fracs {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        Ok(counts)
    }
}

/// Anything that can hand out bursts of a requested class.
pub trait BurstSource {
    fn draw(&mut self, class: ConditionClass, count: usize, seed: u64) -> Result<Vec<Burst>, DatasetError>;
}

impl BurstSource for Synthesizer {
    fn draw(&mut self, class: ConditionClass, count: usize, seed: u64) -> Result<Vec<Burst>, DatasetError> {
        let mut rng = seeded(seed);
        (0..count).map(|_| synthesize_burst(class, &self.params, &mut rng)).collect()
    }
}

/// A finite set of recorded bursts, drawn without replacement.
#[derive(Debug, Clone, Default)]
pub struct BurstPool {
    by_class: BTreeMap<ConditionClass, Vec<Burst>>,
}

impl BurstPool {
    pub fn new(bursts: impl IntoIterator<Item = Burst>) -> Self {
        let mut by_class: BTreeMap<ConditionClass, Vec<Burst>> = BTreeMap::new();
        for b in bursts {
            by_class.entry(b.label).or_default().push(b);
        }
        Self { by_class }
    }

    pub fn available(&self, class: ConditionClass) -> usize {
        self.by_class.get(&class).map_or(0, Vec::len)
    }
}

impl BurstSource for BurstPool {
    fn draw(&mut self, class: ConditionClass, count: usize, seed: u64) -> Result<Vec<Burst>, DatasetError> {
        let available = self.available(class);
        if count > available {
            return Err(DatasetError::Shortfall { class, requested: count, available });
        }
        let pool = self.by_class.entry(class).or_default();
        let mut rng = seeded(seed);
        let mut picked = rand::seq::index::sample(&mut rng, available, count).into_vec();
        picked.sort_unstable();
        let mut taken = Vec::with_capacity(count);
        for &i in picked.iter().rev() {
            taken.push(pool.remove(i));
        }
        taken.reverse();
        Ok(taken)
    }
}

/// Materializes a scenario: bursts ordered by class, ids `0..total`, all
/// splits unassigned. Each class draws from its own seed stream.
pub fn build_scenario(spec: &ScenarioSpec, source: &mut dyn BurstSource) -> Result<LabeledDataset, DatasetError> {
    let counts = spec.class_counts()?;
    let mut bursts = Vec::with_capacity(spec.total);
    for c in ConditionClass::ALL {
        let n = counts[c.index()];
        if n == 0 {
            continue;
        }
        let drawn = source.draw(c, n, derive_seed(spec.seed, &format!("class/{}", c.name())))?;
        bursts.extend(drawn);
    }
    for (i, b) in bursts.iter_mut().enumerate() {
        b.id = i as u64;
    }
    let ds = LabeledDataset::new(bursts);
    ds.geometry()?;
    Ok(ds)
}
