use std::io::Write;

use fdd_autodiff::{backward, no_grad, Adam, ParamStore, Tensor};
use rand::seq::index;
use rand::Rng;
use serde::Serialize;

use super::{build_critic, critic_loss, generator_loss, Critic, GanConfig, GanError, GeneratorNet};
use crate::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GanEpoch {
    pub epoch: usize,
    /// Mean critic objective over the epoch's critic updates.
    pub critic_loss: f64,
    pub generator_loss: f64,
    /// Mean `D(real) − D(fake)` estimate.
    pub wasserstein: f64,
    pub penalty: f64,
    /// Mean interpolate gradient norm.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GanHistory {
    pub epochs: Vec<GanEpoch>,
    /// Mean gradient norm of every critic update, in order.
    pub critic_grad_norms: Vec<f64>,
}

impl GanHistory {
    /// Mean gradient norm over the last `k` critic updates.
    pub fn trailing_grad_norm(&self, k: usize) -> Option<f64> {
        let n = self.critic_grad_norms.len();
        if n == 0 || k == 0 {
            return None;
        }
        let tail = &self.critic_grad_norms[n.saturating_sub(k)..];
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        for e in &self.epochs {
            out.serialize(e)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// State captured when training produces a non-finite loss.
#[derive(Debug, Clone, Serialize)]
pub struct GanDiagnostics {
    pub epoch: usize,
    /// Critic update within the epoch, or `None` for the generator update.
    pub critic_iteration: Option<usize>,
    pub loss: f64,
    pub max_abs_critic_param: f64,
    pub max_abs_generator_param: f64,
    /// Up to five epochs before the failure.
    pub recent: Vec<GanEpoch>,
}

impl GanDiagnostics {
    pub fn summary(&self) -> String {
        let stage = match self.critic_iteration {
            Some(i) => format!("critic update {i}"),
            None => "generator update".to_string(),
        };
        format!(
            "{stage}, loss {}, max |critic param| {:.3e}, max |generator param| {:.3e}",
            self.loss, self.max_abs_critic_param, self.max_abs_generator_param
        )
    }
}

fn max_abs(p: &ParamStore) -> f64 {
    p.iter().flat_map(|e| e.values.iter()).fold(0.0_f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
}

/// Trains a WGAN-GP on `real` bursts of `cfg.burst_len` samples.
///
/// Bursts are standardized by their pooled mean and standard deviation
/// before training; the returned generator stores both and undoes the
/// transform when sampling. The real batch
/// size is capped at the number of bursts.
pub fn train_wgan_gp(real: &[Vec<f64>], cfg: &GanConfig) -> Result<(GeneratorNet, GanHistory), GanError> {
    cfg.validate()?;
    let l = cfg.burst_len;
    if real.len() < 2 {
        return Err(GanError::TooFewSamples { have: real.len(), need: 2 });
    }
    if let Some(b) = real.iter().find(|b| b.len() != l) {
        return Err(GanError::Shape(format!("burst of {} samples, expected {l}", b.len())));
    }
    let count = (real.len() * l) as f64;
    let offset = real.iter().flatten().sum::<f64>() / count;
    let scale = (real.iter().flatten().map(|v| (v - offset).powi(2)).sum::<f64>() / count).sqrt();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(GanError::Config(format!("training bursts have standard deviation {scale}")));
    }
    let data: Vec<f64> = real.iter().flatten().map(|v| (v - offset) / scale).collect();

    let mut critic = build_critic(&cfg.critic, l, derive_seed(cfg.seed, "gan/critic"))?;
    let mut generator = GeneratorNet::new(l, cfg.generator_min_width, &mut seeded(derive_seed(cfg.seed, "gan/generator")));
    generator.data_offset = offset;
    generator.data_scale = scale;
    let mut rng = seeded(derive_seed(cfg.seed, "gan/batches"));
    let mut opt_c = Adam::new(critic.params(), cfg.adam.into());
    let mut opt_g = Adam::new(&generator.params, cfg.adam.into());
    let m = cfg.batch_size.min(real.len());
    let mut average = cfg.generator_ema.map(|d| (d, generator.params.clone()));
    let mut history = GanHistory::default();
    let report_every = (cfg.epochs / 10).max(1);

    for epoch in 0..cfg.epochs {
        let mut sums = [0.0; 4];
        for it in 0..cfg.n_critic {
            let picks = index::sample(&mut rng, real.len(), m);
            let mut batch = Vec::with_capacity(m * l);
            for i in picks.iter() {
                batch.extend_from_slice(&data[i * l..(i + 1) * l]);
            }
            let real_t = Tensor::new(batch, &[m, l]);
            let z = generator.noise(m, &mut rng);
            let fake = no_grad(|| generator.forward(&generator.params.bind_frozen(), &z))?;
            let delta = Tensor::new((0..m).map(|_| rng.gen::<f64>()).collect(), &[m]);
            let bound = critic.params().bind();
            let parts = critic_loss(critic.as_ref(), &bound, &real_t, &fake, &delta, cfg.gamma)?;
            let loss = parts.loss.item();
            if !loss.is_finite() {
                return Err(failure(epoch, Some(it), loss, critic.as_ref(), &generator, &history));
            }
            let grads = backward(&parts.loss, &bound.leaves(), false)?;
            opt_c.step(critic.params_mut(), &grads);
            sums[0] += loss;
            sums[1] += parts.wasserstein;
            sums[2] += parts.penalty;
            sums[3] += parts.mean_grad_norm;
            history.critic_grad_norms.push(parts.mean_grad_norm);
        }
        let bound = generator.params.bind();
        let z = generator.noise(m, &mut rng);
        let fake = generator.forward(&bound, &z)?;
        let g_loss = generator_loss(critic.as_ref(), &critic.params().bind_frozen(), &fake)?;
        let g_val = g_loss.item();
        if !g_val.is_finite() {
            return Err(failure(epoch, None, g_val, critic.as_ref(), &generator, &history));
        }
        let grads = backward(&g_loss, &bound.leaves(), false)?;
        opt_g.step(&mut generator.params, &grads);
        if let Some((d, avg)) = average.as_mut() {
            // bias-corrected so early epochs are not pulled toward the initialization
            let w = (1.0 - *d) / (1.0 - d.powi(epoch as i32 + 1));
            for (a, p) in avg.iter_mut().zip(generator.params.iter()) {
                for (x, y) in a.values.iter_mut().zip(&p.values) {
                    *x += w * (y - *x);
                }
            }
        }

        let k = cfg.n_critic as f64;
        let rec = GanEpoch {
            epoch,
            critic_loss: sums[0] / k,
            generator_loss: g_val,
            wasserstein: sums[1] / k,
            penalty: sums[2] / k,
            grad_norm: sums[3] / k,
        };
        if (epoch + 1) % report_every == 0 {
            log::debug!(
                "gan epoch {}/{}: critic {:.4}, generator {:.4}, W {:.4}, |grad| {:.3}",
                epoch + 1,
                cfg.epochs,
                rec.critic_loss,
                rec.generator_loss,
                rec.wasserstein,
                rec.grad_norm
            );
        }
        history.epochs.push(rec);
    }
    if let Some((_, avg)) = average {
        generator.params = avg;
    }
    generator.trained = true;
    Ok((generator, history))
}

fn failure(
    epoch: usize,
    critic_iteration: Option<usize>,
    loss: f64,
    critic: &dyn Critic,
    generator: &GeneratorNet,
    history: &GanHistory,
) -> GanError {
    let n = history.epochs.len();
    GanError::NonFinite(Box::new(GanDiagnostics {
        epoch,
        critic_iteration,
        loss,
        max_abs_critic_param: max_abs(critic.params()),
        max_abs_generator_param: max_abs(&generator.params),
        recent: history.epochs[n.saturating_sub(5)..].to_vec(),
    }))
}
