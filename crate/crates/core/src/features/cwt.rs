use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::fft::{full_spectrum, inverse_in_place};
use super::{FeatureConfig, FeatureError};

/// Morlet filter bank for one burst length and sample rate.
///
/// Row `j` has center frequency `f_j` (log-spaced from Nyquist down to
/// `min_freq_hz`, so row 0 is the smallest scale) and scale
/// `s_j = ω0·fs / (2π·f_j)` samples. The analytic wavelet's spectrum is
/// `2·exp(−(s·ω − ω0)² / 2)` for `ω > 0` and zero otherwise, which gives a
/// unit-amplitude tone at `f_j` a coefficient magnitude of one.
#[derive(Debug, Clone)]
pub struct MorletBank {
    pub omega0: f64,
    pub sample_rate: f64,
    pub len: usize,
    pub center_freqs: Vec<f64>,
    pub scales: Vec<f64>,
    /// Rows whose wavelet (`2√2·s` samples wide) does not fit in the burst.
    pub degenerate: Vec<bool>,
    filters: Vec<Vec<f64>>,
}

impl MorletBank {
    pub fn new(config: &FeatureConfig, sample_rate: f64, len: usize) -> Result<Self, FeatureError> {
        if config.scales == 0 {
            return Err(FeatureError::Config("at least one scale is required".into()));
        }
        if len == 0 {
            return Err(FeatureError::Empty);
        }
        let nyquist = sample_rate / 2.0;
        if !(config.min_freq_hz > 0.0 && config.min_freq_hz < nyquist) {
            return Err(FeatureError::Config(format!(
                "lowest frequency {} Hz must lie in (0, {nyquist})",
                config.min_freq_hz
            )));
        }
        if !(config.omega0 > 0.0) {
            return Err(FeatureError::Config(format!("omega0 = {}", config.omega0)));
        }
        let s = config.scales;
        let center_freqs: Vec<f64> = (0..s)
            .map(|j| {
                if s == 1 {
                    nyquist
                } else {
                    nyquist * (config.min_freq_hz / nyquist).powf(j as f64 / (s - 1) as f64)
                }
            })
            .collect();
        let scales: Vec<f64> = center_freqs.iter().map(|f| config.omega0 * sample_rate / (2.0 * PI * f)).collect();
        let degenerate: Vec<bool> = scales.iter().map(|s| 2.0 * 2f64.sqrt() * s > len as f64).collect();
        let flagged = degenerate.iter().filter(|d| **d).count();
        if flagged > 0 {
            log::warn!("cwt: {flagged} of {s} scales are wider than the {len}-sample burst; their rows are zero-filled");
        }
        let filters = scales
            .iter()
            .map(|&sc| {
                (0..len)
                    .map(|k| {
                        if k == 0 || k > len / 2 {
                            return 0.0;
                        }
                        let w = 2.0 * PI * k as f64 / len as f64;
                        2.0 * (-(sc * w - config.omega0).powi(2) / 2.0).exp()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { omega0: config.omega0, sample_rate, len, center_freqs, scales, degenerate, filters })
    }

    pub fn rows(&self) -> usize {
        self.scales.len()
    }

    /// Row whose center frequency is closest to `freq` in ratio,
    /// i.e. minimizing `|freq / f_j − 1|`.
    pub fn nearest_row(&self, freq: f64) -> usize {
        let mut best = 0;
        for j in 1..self.rows() {
            if (freq / self.center_freqs[j] - 1.0).abs() < (freq / self.center_freqs[best] - 1.0).abs() {
                best = j;
            }
        }
        best
    }
}

/// Scalogram magnitudes, `rows × cols` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalogram {
    pub burst_id: u64,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl Scalogram {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_energy(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().map(|v| v * v).sum()).collect()
    }
}

/// `|W(s_j, t)|` by circular convolution in the frequency domain, sampled
/// at `timesteps` evenly spaced positions `floor(c·B / F)`. Degenerate rows
/// are zero.
pub fn cwt_scalogram(
    samples: &[f64],
    burst_id: u64,
    bank: &MorletBank,
    timesteps: usize,
) -> Result<Scalogram, FeatureError> {
    let n = samples.len();
    if n != bank.len {
        return Err(FeatureError::Shape(format!("burst of {n} samples for a bank built for {}", bank.len)));
    }
    if timesteps == 0 || timesteps > n {
        return Err(FeatureError::Shape(format!("{timesteps} columns from {n} samples")));
    }
    let spec = full_spectrum(samples);
    let mut values = vec![0.0; bank.rows() * timesteps];
    for (j, filter) in bank.filters.iter().enumerate() {
        if bank.degenerate[j] {
            continue;
        }
        let mut buf: Vec<Complex64> = spec.iter().zip(filter).map(|(x, h)| x * h).collect();
        inverse_in_place(&mut buf);
        let row = &mut values[j * timesteps..(j + 1) * timesteps];
        for (c, v) in row.iter_mut().enumerate() {
            *v = buf[c * n / timesteps].norm() / n as f64;
        }
    }
    Ok(Scalogram { burst_id, rows: bank.rows(), cols: timesteps, values, degenerate: bank.degenerate.clone() })
}
