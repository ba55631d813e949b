use std::io::Write;
use std::rc::Rc;

use fdd_autodiff::{backward, no_grad, Adam, Bound, Tensor};
use rand::seq::SliceRandom;
use serde::Serialize;

use super::model::{softmax, BatchStats};
use super::{ClstmConfig, ClstmError, ClstmModel, SoftmaxHead};
use crate::features::FeatureTensor;
use crate::{derive_seed, seeded};

/// Tensors with class indices, borrowed.
#[derive(Debug, Clone, Copy)]
pub struct LabeledTensors<'a> {
    pub tensors: &'a [FeatureTensor],
    pub labels: &'a [usize],
}

impl<'a> LabeledTensors<'a> {
    pub fn new(tensors: &'a [FeatureTensor], labels: &'a [usize]) -> Self {
        Self { tensors, labels }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClstmEpoch {
    pub epoch: usize,
    /// Weighted cross-entropy averaged over the epoch's batches.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClstmCurves {
    pub epochs: Vec<ClstmEpoch>,
}

impl ClstmCurves {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        for e in &self.epochs {
            out.serialize(e)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// A frozen trunk with the head it was trained with.
#[derive(Debug, Clone)]
pub struct TrainedClstm {
    pub model: ClstmModel,
    pub head: SoftmaxHead,
    pub curves: ClstmCurves,
}

fn check_labels(set: &LabeledTensors<'_>, classes: usize) -> Result<(), ClstmError> {
    if set.tensors.len() != set.labels.len() {
        return Err(ClstmError::Shape(format!("{} tensors, {} labels", set.tensors.len(), set.labels.len())));
    }
    match set.labels.iter().find(|&&l| l >= classes) {
        Some(&label) => Err(ClstmError::Label { label, classes }),
        None => Ok(()),
    }
}

/// Weighted mean cross-entropy of `logits [n, k]` and the number of rows
/// whose arg-max matches the label.
pub fn weighted_cross_entropy(logits: &Tensor, labels: &[usize], weights: &[f64]) -> (Tensor, usize) {
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    let v = logits.values();
    let mut maxes = Vec::with_capacity(n);
    let mut correct = 0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &v[i * k..(i + 1) * k];
        let (arg, m) = row.iter().enumerate().fold((0, f64::NEG_INFINITY), |(a, m), (j, &x)| if x > m { (j, x) } else { (a, m) });
        maxes.push(m);
        correct += usize::from(arg == y);
    }
    let shifted = logits.sub(&Tensor::new(maxes, &[n]).broadcast_cols(k));
    let lse = shifted.exp().sum_cols().ln();
    let idx: Rc<[usize]> = labels.iter().enumerate().map(|(i, &y)| i * k + y).collect();
    let nll = lse.sub(&shifted.gather(idx, &[n]));
    let total: f64 = weights.iter().sum();
    let loss = nll.mul(&Tensor::new(weights.to_vec(), &[n])).sum().scale(1.0 / total);
    (loss, correct)
}

fn max_abs(model: &ClstmModel, head: &SoftmaxHead) -> f64 {
    model.params.iter().chain(head.params.iter()).flat_map(|e| e.values.iter()).fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// Trains the trunk end to end through a temporary softmax head with
/// class-weighted cross-entropy and Adam, then freezes it.
///
/// `val` only feeds the curves and a divergence warning; it never changes
/// the returned parameters.
pub fn train_clstm(
    train: LabeledTensors<'_>,
    val: Option<LabeledTensors<'_>>,
    classes: usize,
    cfg: &ClstmConfig,
) -> Result<TrainedClstm, ClstmError> {
    let first = train.tensors.first().ok_or(ClstmError::Empty)?;
    if classes < 2 {
        return Err(ClstmError::Config(format!("need at least two classes, got {classes}")));
    }
    check_labels(&train, classes)?;
    if let Some(v) = &val {
        check_labels(v, classes)?;
    }
    let mut model = ClstmModel::new(cfg, first.channels, first.timesteps)?;
    let mut head = SoftmaxHead::new(cfg.feature_dim(), classes, derive_seed(cfg.seed, "clstm/head"));

    let mut counts = vec![0usize; classes];
    for &l in train.labels {
        counts[l] += 1;
    }
    let weight_of = |l: usize| if cfg.training.class_weighting && counts[l] > 0 { 1.0 / counts[l] as f64 } else { 1.0 };

    let adam = cfg.training.adam.into();
    let mut opt_trunk = Adam::new(&model.params, adam);
    let mut opt_head = Adam::new(&head.params, adam);
    let mut rng = seeded(derive_seed(cfg.seed, "clstm/shuffle"));
    let mut order: Vec<usize> = (0..train.tensors.len()).collect();
    let bs = cfg.training.batch_size;
    let mut curves = ClstmCurves::default();
    let mut best_val = f64::INFINITY;
    let mut warned = false;

    for epoch in 0..cfg.training.epochs {
        order.shuffle(&mut rng);
        let mut batches: Vec<&[usize]> = order.chunks(bs).collect();
        // a single-row batch would give batchnorm zero variance
        if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
            batches.pop();
            let n = batches.len();
            batches[n - 1] = &order[(n - 1) * bs..];
        }
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (bi, idx) in batches.iter().enumerate() {
            let tensors: Vec<&FeatureTensor> = idx.iter().map(|&i| &train.tensors[i]).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let weights: Vec<f64> = labels.iter().map(|&l| weight_of(l)).collect();
            let x = model.batch(&tensors)?;
            let pt = model.params.bind();
            let ph = head.params.bind();
            let mut running = std::mem::take(&mut model.running);
            let feats = model.forward(&pt, &x, BatchStats::Train(&mut running));
            model.running = running;
            let logits = head.logits(&ph, &feats?)?;
            let (loss, ok) = weighted_cross_entropy(&logits, &labels, &weights);
            let value = loss.item();
            if !value.is_finite() {
                return Err(ClstmError::NonFinite { epoch, batch: bi, max_abs_param: max_abs(&model, &head) });
            }
            let mut leaves = pt.leaves();
            leaves.extend(ph.leaves());
            let mut grads = backward(&loss, &leaves, false)?;
            let head_grads = grads.split_off(pt.0.len());
            opt_trunk.step(&mut model.params, &grads);
            opt_head.step(&mut head.params, &head_grads);
            loss_sum += value;
            correct += ok;
        }
        let val_stats = match &val {
            Some(v) if !v.tensors.is_empty() => Some(evaluate(&model, &head, v, &weight_of)?),
            _ => None,
        };
        if let Some((vl, _)) = val_stats {
            if epoch >= 2 && vl > 2.0 * best_val && !warned {
                log::warn!("clstm: validation loss {vl:.4} at epoch {epoch} is over twice its best {best_val:.4}");
                warned = true;
            }
            best_val = best_val.min(vl);
        }
        let rec = ClstmEpoch {
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            train_accuracy: correct as f64 / train.tensors.len() as f64,
            val_loss: val_stats.map(|s| s.0),
            val_accuracy: val_stats.map(|s| s.1),
        };
        log::debug!("clstm epoch {}: loss {:.4}, accuracy {:.3}", epoch + 1, rec.train_loss, rec.train_accuracy);
        curves.epochs.push(rec);
    }
    model.frozen = true;
    Ok(TrainedClstm { model, head, curves })
}

/// Weighted loss and accuracy in evaluation mode.
fn evaluate(
    model: &ClstmModel,
    head: &SoftmaxHead,
    set: &LabeledTensors<'_>,
    weight_of: &dyn Fn(usize) -> f64,
) -> Result<(f64, f64), ClstmError> {
    let frozen: Bound = head.params.bind_frozen();
    let (mut wl, mut wsum, mut correct) = (0.0, 0.0, 0usize);
    for (chunk, labels) in set.tensors.chunks(64).zip(set.labels.chunks(64)) {
        let refs: Vec<&FeatureTensor> = chunk.iter().collect();
        let feats = model.features_batch(&refs)?;
        let d = model.feature_dim();
        let x = Tensor::new(feats.into_iter().flatten().collect(), &[refs.len(), d]);
        let logits = no_grad(|| head.logits(&frozen, &x))?;
        for (row, &y) in logits.values().chunks(head.classes).zip(labels) {
            let p = softmax(row);
            let w = weight_of(y);
            wl -= w * p[y].max(f64::MIN_POSITIVE).ln();
            wsum += w;
            let arg = p.iter().enumerate().fold(0, |a, (j, &v)| if v > p[a] { j } else { a });
            correct += usize::from(arg == y);
        }
    }
    Ok((wl / wsum, correct as f64 / set.tensors.len() as f64))
}
