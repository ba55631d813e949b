//! Additive white Gaussian noise and classic (non-generative) augmentation.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{mean_square, Burst, DatasetError, LabeledDataset, Origin};
use crate::{derive_seed, seeded};

/// Adds zero-mean Gaussian noise with variance `P / 10^(snr_db / 10)`, where
/// `P` is the burst's mean squared value over all channels.
pub fn add_awgn<R: Rng + ?Sized>(burst: &Burst, snr_db: f64, rng: &mut R) -> Result<Burst, DatasetError> {
    let p = burst.power();
    if p == 0.0 {
        return Err(DatasetError::ZeroPower { id: burst.id });
    }
    let sigma = (p / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, sigma).map_err(|_| DatasetError::InvalidParam { name: "snr_db", value: snr_db })?;
    let samples = burst.samples.iter().map(|v| v + normal.sample(rng)).collect();
    Ok(Burst { samples, ..burst.clone() })
}

/// Noise on every burst of a dataset. Each burst draws from a stream keyed
/// by its id, so the result does not depend on burst order.
pub fn apply_awgn(dataset: &LabeledDataset, snr_db: f64, seed: u64) -> Result<LabeledDataset, DatasetError> {
    let bursts = dataset
        .bursts
        .iter()
        .map(|b| {
            let mut rng = seeded(derive_seed(seed, &format!("awgn/{}", b.id)));
            add_awgn(b, snr_db, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LabeledDataset { bursts, splits: dataset.splits.clone() })
}

/// `10·log10(P_clean / P_noise)` with the noise taken as `noisy − clean`.
pub fn measured_snr_db(clean: &[f64], noisy: &[f64]) -> f64 {
    let noise: Vec<f64> = noisy.iter().zip(clean).map(|(n, c)| n - c).collect();
    10.0 * (mean_square(clean) / mean_square(&noise)).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicKind {
    TimeReversal,
    Negation,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassicAugment {
    /// SNR range for the noise variant, dB (inclusive).
    pub snr_range_db: (f64, f64),
}

impl Default for ClassicAugment {
    fn default() -> Self {
        Self { snr_range_db: (10.0, 30.0) }
    }
}

impl ClassicAugment {
    /// Picks one of time reversal, negation and re-noising uniformly and
    /// applies it. The label is kept.
    pub fn apply<R: Rng + ?Sized>(&self, burst: &Burst, rng: &mut R) -> Result<(Burst, ClassicKind), DatasetError> {
        let kind = match rng.gen_range(0..3) {
            0 => ClassicKind::TimeReversal,
            1 => ClassicKind::Negation,
            _ => ClassicKind::Noise,
        };
        Ok((self.apply_kind(burst, kind, rng)?, kind))
    }

    /// Applies one specific transform, channel by channel.
    pub fn apply_kind<R: Rng + ?Sized>(&self, burst: &Burst, kind: ClassicKind, rng: &mut R) -> Result<Burst, DatasetError> {
        Ok(match kind {
            ClassicKind::TimeReversal => {
                let n = burst.len();
                let mut s = burst.samples.clone();
                for c in 0..burst.channels {
                    s[c * n..(c + 1) * n].reverse();
                }
                burst.with_samples(s, Origin::Augmented)
            }
            ClassicKind::Negation => burst.with_samples(burst.samples.iter().map(|v| -v).collect(), Origin::Augmented),
            ClassicKind::Noise => {
                let (lo, hi) = self.snr_range_db;
                let snr = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
                let mut b = add_awgn(burst, snr, rng)?;
                b.origin = Origin::Augmented;
                b
            }
        })
    }
}

/// [`ClassicAugment::apply`] with the default SNR range.
pub fn classic_augment<R: Rng + ?Sized>(burst: &Burst, rng: &mut R) -> Result<Burst, DatasetError> {
    ClassicAugment::default().apply(burst, rng).map(|(b, _)| b)
}
