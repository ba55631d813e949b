use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::FeatureError;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward DFT of a real sequence.
pub fn full_spectrum(samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if !buf.is_empty() {
        let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
        fft.process(&mut buf);
    }
    buf
}

/// Unnormalized inverse DFT.
pub(crate) fn inverse_in_place(buf: &mut [Complex64]) {
    if !buf.is_empty() {
        let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
        fft.process(buf);
    }
}

/// `max_k |X[k] − conj(X[B−k])|` for a full spectrum.
pub fn conjugate_asymmetry(spectrum: &[Complex64]) -> f64 {
    let n = spectrum.len();
    (1..n).map(|k| (spectrum[k] - spectrum[n - k].conj()).norm()).fold(0.0, f64::max)
}

/// One-sided magnitude spectrum tagged with its burst.
#[derive(Debug, Clone, PartialEq)]
pub struct FftRow {
    pub burst_id: u64,
    pub values: Vec<f64>,
}

/// `|X[k]|` for `k = 0 .. B/2 − 1` (DC up to the bin below Nyquist).
pub fn fft_magnitude(samples: &[f64]) -> Result<Vec<f64>, FeatureError> {
    let n = samples.len();
    if n == 0 {
        return Err(FeatureError::Empty);
    }
    if n % 2 == 1 {
        return Err(FeatureError::OddLength(n));
    }
    let spec = full_spectrum(samples);
    let scale = spec.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let asym = conjugate_asymmetry(&spec);
    if asym > 1e-10 * scale {
        log::warn!("fft: spectrum of a real signal is asymmetric by {asym:e}");
    }
    Ok(spec[..n / 2].iter().map(|c| c.norm()).collect())
}
