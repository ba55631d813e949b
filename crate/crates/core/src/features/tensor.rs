use std::path::Path;

use fdd_autodiff::{load_fddw, save_fddw, NamedTensor};

use super::cwt::{cwt_scalogram, MorletBank, Scalogram};
use super::fft::{fft_magnitude, FftRow};
use super::{FeatureConfig, FeatureError};
use crate::dataset::Burst;
use crate::par;

/// Stacked feature rows of one burst, `channels × timesteps` row-major.
///
/// Per sensor channel the rows are the S scalogram rows (smallest scale
/// first) followed by the FFT magnitude row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub burst_id: u64,
    pub channels: usize,
    pub timesteps: usize,
    pub values: Vec<f64>,
}

impl FeatureTensor {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.timesteps..(r + 1) * self.timesteps]
    }

    /// Values in `[timesteps, channels]` order, the layout the sequence
    /// models consume.
    pub fn to_sequence(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len()];
        for r in 0..self.channels {
            for t in 0..self.timesteps {
                out[t * self.channels + r] = self.values[r * self.timesteps + t];
            }
        }
        out
    }
}

/// Linear interpolation of `values` onto `n` evenly spaced points spanning
/// the same index range.
pub fn resample_linear(values: &[f64], n: usize) -> Vec<f64> {
    match (values.len(), n) {
        (_, 0) => Vec::new(),
        (0, _) => vec![0.0; n],
        (1, _) => vec![values[0]; n],
        (m, 1) => vec![values[0] * 0.5 + values[m - 1] * 0.5],
        (m, _) => (0..n)
            .map(|c| {
                let x = c as f64 * (m - 1) as f64 / (n - 1) as f64;
                let i = (x.floor() as usize).min(m - 2);
                let t = x - i as f64;
                values[i] * (1.0 - t) + values[i + 1] * t
            })
            .collect(),
    }
}

/// Scalogram rows followed by the FFT row resampled to the scalogram width.
pub fn assemble_tensor(fft: &FftRow, scalogram: &Scalogram) -> Result<FeatureTensor, FeatureError> {
    if fft.burst_id != scalogram.burst_id {
        return Err(FeatureError::Provenance { fft: fft.burst_id, scalogram: scalogram.burst_id });
    }
    let mut values = scalogram.values.clone();
    values.extend(resample_linear(&fft.values, scalogram.cols));
    Ok(FeatureTensor { burst_id: fft.burst_id, channels: scalogram.rows + 1, timesteps: scalogram.cols, values })
}

/// Builds tensors for bursts of one length and sample rate.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub config: FeatureConfig,
    pub bank: MorletBank,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig, sample_rate: f64, burst_len: usize) -> Result<Self, FeatureError> {
        if config.timesteps == 0 || config.timesteps > burst_len {
            return Err(FeatureError::Config(format!(
                "tensor width {} must be in 1..={burst_len}",
                config.timesteps
            )));
        }
        let bank = MorletBank::new(&config, sample_rate, burst_len)?;
        Ok(Self { config, bank })
    }

    /// Rows of the tensor for a burst with `sensors` channels.
    pub fn tensor_rows(&self, sensors: usize) -> usize {
        sensors * self.config.rows_per_channel()
    }

    pub fn tensor(&self, burst: &Burst) -> Result<FeatureTensor, FeatureError> {
        let mut values = Vec::with_capacity(self.tensor_rows(burst.channels) * self.config.timesteps);
        for c in 0..burst.channels {
            let x = burst.channel(c);
            let fft = FftRow { burst_id: burst.id, values: fft_magnitude(x)? };
            let sc = cwt_scalogram(x, burst.id, &self.bank, self.config.timesteps)?;
            values.extend(assemble_tensor(&fft, &sc)?.values);
        }
        Ok(FeatureTensor {
            burst_id: burst.id,
            channels: self.tensor_rows(burst.channels),
            timesteps: self.config.timesteps,
            values,
        })
    }

    /// Tensors for many bursts, in input order.
    pub fn tensors(&self, bursts: &[Burst]) -> Result<Vec<FeatureTensor>, FeatureError> {
        par::map(bursts, |b| self.tensor(b)).into_iter().collect()
    }

    pub fn tensors_ref(&self, bursts: &[&Burst]) -> Result<Vec<FeatureTensor>, FeatureError> {
        par::map(bursts, |b| self.tensor(b)).into_iter().collect()
    }
}

/// Per-row mean and standard deviation frozen from a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorStandardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl TensorStandardizer {
    pub fn fit(tensors: &[FeatureTensor]) -> Result<Self, FeatureError> {
        let first = tensors.first().ok_or(FeatureError::Empty)?;
        let (rows, cols) = (first.channels, first.timesteps);
        for t in tensors {
            if (t.channels, t.timesteps) != (rows, cols) {
                return Err(FeatureError::Shape(format!(
                    "tensor {} is {}×{}, expected {rows}×{cols}",
                    t.burst_id, t.channels, t.timesteps
                )));
            }
        }
        let count = (tensors.len() * cols) as f64;
        let mut mean = vec![0.0; rows];
        let mut std = vec![0.0; rows];
        for r in 0..rows {
            let m = tensors.iter().map(|t| t.row(r).iter().sum::<f64>()).sum::<f64>() / count;
            let v = tensors.iter().map(|t| t.row(r).iter().map(|x| (x - m).powi(2)).sum::<f64>()).sum::<f64>() / count;
            mean[r] = m;
            std[r] = v.sqrt();
        }
        Ok(Self { mean, std })
    }

    /// Rows whose training spread is negligible map to zero.
    pub fn apply(&self, t: &FeatureTensor) -> Result<FeatureTensor, FeatureError> {
        if t.channels != self.mean.len() {
            return Err(FeatureError::Shape(format!("{} rows for a {}-row standardizer", t.channels, self.mean.len())));
        }
        let mut values = t.values.clone();
        for r in 0..t.channels {
            let (m, s) = (self.mean[r], self.std[r]);
            let row = &mut values[r * t.timesteps..(r + 1) * t.timesteps];
            if s <= 1e-12 * m.abs().max(1.0) {
                row.fill(0.0);
            } else {
                for v in row {
                    *v = (*v - m) / s;
                }
            }
        }
        Ok(FeatureTensor { values, ..t.clone() })
    }

    pub fn apply_all(&self, ts: &[FeatureTensor]) -> Result<Vec<FeatureTensor>, FeatureError> {
        par::map(ts, |t| self.apply(t)).into_iter().collect()
    }

    pub fn to_named(&self) -> Vec<NamedTensor> {
        vec![
            NamedTensor::new("standardizer/mean", &[self.mean.len()], self.mean.clone()),
            NamedTensor::new("standardizer/std", &[self.std.len()], self.std.clone()),
        ]
    }

    pub fn from_named(ts: &[NamedTensor]) -> Option<Self> {
        let get = |n: &str| ts.iter().find(|t| t.name == n).map(|t| t.values.clone());
        Some(Self { mean: get("standardizer/mean")?, std: get("standardizer/std")? })
    }
}

/// Writes tensors to an FDDW container, one entry per burst named
/// `<key>/<burst id>`.
pub fn save_tensors(path: impl AsRef<Path>, key: &str, tensors: &[FeatureTensor]) -> Result<(), FeatureError> {
    let named: Vec<NamedTensor> = tensors
        .iter()
        .map(|t| NamedTensor::new(format!("{key}/{}", t.burst_id), &[t.channels, t.timesteps], t.values.clone()))
        .collect();
    Ok(save_fddw(path, &named)?)
}

pub fn load_tensors(path: impl AsRef<Path>, key: &str) -> Result<Vec<FeatureTensor>, FeatureError> {
    let prefix = format!("{key}/");
    load_fddw(path)?
        .into_iter()
        .filter_map(|t| {
            let id = t.name.strip_prefix(&prefix)?.parse::<u64>().ok()?;
            Some((id, t))
        })
        .map(|(id, t)| match t.shape.as_slice() {
            [c, f] => Ok(FeatureTensor { burst_id: id, channels: *c, timesteps: *f, values: t.values }),
            s => Err(FeatureError::Shape(format!("cached tensor {id} has shape {s:?}"))),
        })
        .collect()
}
