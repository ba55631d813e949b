//! Parameterized bearing vibration synthesizer.
//!
//! Healthy bursts are a shaft-rate sinusoid over a Gaussian noise floor.
//! Fault bursts add a train of decaying resonance rings at the defect's
//! characteristic frequency. The three outer-race classes share one
//! frequency and differ only in how strongly the shaft rotation modulates
//! the impact amplitude.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Burst, ConditionClass, DatasetError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub sample_rate: f64,
    pub burst_len: usize,
    pub channels: usize,
    pub shaft_hz: f64,
    pub shaft_amplitude: f64,
    pub inner_hz: f64,
    pub ball_hz: f64,
    pub outer_hz: f64,
    /// Cage rotation rate; modulates ball impacts.
    pub cage_hz: f64,
    pub resonance_hz: f64,
    /// Exponential decay rate of each ring, 1/s.
    pub ring_decay: f64,
    pub impulse_amplitude: f64,
    /// Standard deviation of the additive Gaussian floor.
    pub noise_floor: f64,
    /// Relative per-impulse amplitude jitter (uniform, ±).
    pub amplitude_jitter: f64,
    /// Relative per-burst jitter of all rates (uniform, ±).
    pub speed_jitter: f64,
    pub inner_modulation: f64,
    pub ball_modulation: f64,
    /// Load-zone modulation depth for out1, out2, out3.
    pub outer_modulation: [f64; 3],
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            sample_rate: 12_000.0,
            burst_len: 800,
            channels: 1,
            shaft_hz: 29.95,
            shaft_amplitude: 0.3,
            inner_hz: 162.19,
            ball_hz: 141.17,
            outer_hz: 107.36,
            cage_hz: 11.93,
            resonance_hz: 3_000.0,
            ring_decay: 900.0,
            impulse_amplitude: 1.0,
            noise_floor: 0.05,
            amplitude_jitter: 0.1,
            speed_jitter: 0.01,
            inner_modulation: 0.5,
            ball_modulation: 0.5,
            outer_modulation: [0.0, 0.5, 0.95],
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let positive = [
            ("sample_rate", self.sample_rate),
            ("shaft_hz", self.shaft_hz),
            ("inner_hz", self.inner_hz),
            ("ball_hz", self.ball_hz),
            ("outer_hz", self.outer_hz),
            ("cage_hz", self.cage_hz),
            ("resonance_hz", self.resonance_hz),
            ("ring_decay", self.ring_decay),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(DatasetError::InvalidParam { name, value });
            }
        }
        let nonneg = [
            ("shaft_amplitude", self.shaft_amplitude),
            ("impulse_amplitude", self.impulse_amplitude),
            ("noise_floor", self.noise_floor),
            ("amplitude_jitter", self.amplitude_jitter),
            ("speed_jitter", self.speed_jitter),
        ];
        for (name, value) in nonneg {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(DatasetError::InvalidParam { name, value });
            }
        }
        if self.burst_len == 0 {
            return Err(DatasetError::InvalidParam { name: "burst_len", value: 0.0 });
        }
        if self.channels == 0 {
            return Err(DatasetError::InvalidParam { name: "channels", value: 0.0 });
        }
        if self.speed_jitter >= 1.0 {
            return Err(DatasetError::InvalidParam { name: "speed_jitter", value: self.speed_jitter });
        }
        Ok(())
    }

    /// Impact rate and modulation (rate, depth) for a fault class.
    fn fault_profile(&self, class: ConditionClass) -> Option<(f64, f64, f64)> {
        match class {
            ConditionClass::Health => None,
            ConditionClass::Inner => Some((self.inner_hz, self.shaft_hz, self.inner_modulation)),
            ConditionClass::Ball => Some((self.ball_hz, self.cage_hz, self.ball_modulation)),
            ConditionClass::Out1 => Some((self.outer_hz, self.shaft_hz, self.outer_modulation[0])),
            ConditionClass::Out2 => Some((self.outer_hz, self.shaft_hz, self.outer_modulation[1])),
            ConditionClass::Out3 => Some((self.outer_hz, self.shaft_hz, self.outer_modulation[2])),
        }
    }
}

/// Draws one burst of `class`. The burst id is 0; dataset builders renumber.
pub fn synthesize_burst<R: Rng + ?Sized>(
    class: ConditionClass,
    params: &SynthParams,
    rng: &mut R,
) -> Result<Burst, DatasetError> {
    params.validate()?;
    let fs = params.sample_rate;
    let n = params.burst_len;
    let speed = 1.0 + params.speed_jitter * rng.gen_range(-1.0..=1.0);
    let shaft_phase = rng.gen_range(0.0..2.0 * PI);
    let fault = params.fault_profile(class);
    // Impact schedule is shared by all channels of one burst.
    let impacts: Vec<(f64, f64)> = match fault {
        None => Vec::new(),
        Some((rate, mod_rate, depth)) => {
            let period = 1.0 / (rate * speed);
            let mod_phase = rng.gen_range(0.0..2.0 * PI);
            let duration = n as f64 / fs;
            // Start one period early so rings entering the window are present.
            let mut t = -rng.gen_range(0.0..period) - period;
            let mut out = Vec::new();
            while t < duration {
                let envelope = 1.0 - depth * 0.5 * (1.0 + (2.0 * PI * mod_rate * speed * t + mod_phase).cos());
                let jitter = 1.0 + params.amplitude_jitter * rng.gen_range(-1.0..=1.0);
                out.push((t, params.impulse_amplitude * envelope * jitter));
                t += period;
            }
            out
        }
    };
    let ring_len = (12.0 / params.ring_decay * fs).ceil() as usize;
    let mut samples = Vec::with_capacity(n * params.channels);
    for ch in 0..params.channels {
        // Farther sensors see weaker impacts.
        let gain = 1.0 / (1.0 + ch as f64);
        let mut x = vec![0.0; n];
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / fs;
            *v = params.shaft_amplitude * (2.0 * PI * params.shaft_hz * speed * t + shaft_phase).sin();
        }
        for &(t0, amp) in &impacts {
            let first = (t0 * fs).ceil().max(0.0) as usize;
            let last = (((t0 * fs).ceil() + ring_len as f64).max(0.0) as usize).min(n);
            for (i, v) in x.iter_mut().enumerate().take(last).skip(first) {
                let dt = i as f64 / fs - t0;
                *v += gain * amp * (-params.ring_decay * dt).exp() * (2.0 * PI * params.resonance_hz * dt).sin();
            }
        }
        if params.noise_floor > 0.0 {
            for v in &mut x {
                let z: f64 = StandardNormal.sample(rng);
                *v += params.noise_floor * z;
            }
        }
        samples.extend(x);
    }
    Burst::new(0, class, params.channels, fs, samples)
}

/// Synthesizer as a [`super::BurstSource`].
#[derive(Debug, Clone, Default)]
pub struct Synthesizer {
    pub params: SynthParams,
}

impl Synthesizer {
    pub fn new(params: SynthParams) -> Self {
        Self { params }
    }
}
