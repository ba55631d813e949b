use serde::{Deserialize, Serialize};

use super::FeatureError;

/// Seven time-domain statistics of one signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatFeatureVector {
    pub mean: f64,
    pub std: f64,
    pub rms: f64,
    /// Fourth standardized moment (3 for a Gaussian).
    pub kurtosis: f64,
    pub skewness: f64,
    /// Peak absolute value over RMS.
    pub crest: f64,
    pub peak_to_peak: f64,
}

impl StatFeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.mean, self.std, self.rms, self.kurtosis, self.skewness, self.crest, self.peak_to_peak]
    }

    pub const LEN: usize = 7;
}

/// Population statistics. Kurtosis and skewness are zero for a constant
/// signal.
pub fn stat_features(x: &[f64]) -> Result<StatFeatureVector, FeatureError> {
    if x.is_empty() {
        return Err(FeatureError::Empty);
    }
    let n = x.len() as f64;
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if rms == 0.0 {
        return Err(FeatureError::ZeroSignal("crest factor"));
    }
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let degenerate = m2 <= 1e-24 * mean.abs().max(1.0).powi(2);
    let (skewness, kurtosis) = if degenerate { (0.0, 0.0) } else { (m3 / m2.powf(1.5), m4 / (m2 * m2)) };
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let peak = max.abs().max(min.abs());
    Ok(StatFeatureVector {
        mean,
        std: m2.sqrt(),
        rms,
        kurtosis,
        skewness,
        crest: peak / rms,
        peak_to_peak: max - min,
    })
}
