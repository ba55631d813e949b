use fdd_autodiff::{
    affine, batchnorm, conv1d, lstm_sequence, maxpool1d, no_grad, Activation, BatchNormMode, Bound, LstmWeights,
    NamedTensor, ParamId, ParamStore, RunningStats, Tensor,
};

use super::{ClstmConfig, ClstmError};
use crate::features::FeatureTensor;
use crate::{par, seeded};

#[derive(Debug, Clone)]
struct BlockIds {
    conv: (ParamId, ParamId),
    bn: (ParamId, ParamId),
}

/// Dual-path trunk. Parameters are plain vectors, so a frozen model can be
/// shared across threads.
#[derive(Debug, Clone)]
pub struct ClstmModel {
    pub config: ClstmConfig,
    /// Rows (channels) of the input tensors.
    pub rows: usize,
    pub timesteps: usize,
    pub params: ParamStore,
    pub running: Vec<RunningStats>,
    pub frozen: bool,
    path1_conv: (ParamId, ParamId),
    lstm: (ParamId, ParamId, ParamId),
    blocks: Vec<BlockIds>,
    dense: (ParamId, ParamId),
}

/// Batchnorm behaviour for a forward pass: batch statistics folded into the
/// running averages, or the running averages alone.
pub enum BatchStats<'a> {
    Train(&'a mut [RunningStats]),
    Eval,
}

impl ClstmModel {
    /// Freshly initialized model for tensors of `rows × timesteps`.
    pub fn new(config: &ClstmConfig, rows: usize, timesteps: usize) -> Result<Self, ClstmError> {
        config.validate(timesteps)?;
        if rows == 0 {
            return Err(ClstmError::Config("input tensors have no rows".into()));
        }
        let mut rng = seeded(crate::derive_seed(config.seed, "clstm/init"));
        let mut p = ParamStore::new();
        let (f1, w1, h) = (config.path1_filters, config.path1_width, config.lstm_hidden);
        let path1_conv = (
            p.add_glorot("clstm/path1/conv/w", &[w1, rows, f1], w1 * rows, f1, &mut rng),
            p.add_full("clstm/path1/conv/b", &[f1], 0.0),
        );
        let mut lstm_b = vec![0.0; 4 * h];
        lstm_b[h..2 * h].fill(1.0);
        let lstm = (
            p.add_glorot("clstm/path1/lstm/wi", &[f1, 4 * h], f1, h, &mut rng),
            p.add_glorot("clstm/path1/lstm/wr", &[h, 4 * h], h, h, &mut rng),
            p.add("clstm/path1/lstm/b", &[4 * h], lstm_b),
        );
        let mut blocks = Vec::new();
        let mut running = Vec::new();
        let mut ch = rows;
        for (i, b) in config.blocks.iter().enumerate() {
            let conv = (
                p.add_glorot(format!("clstm/path2/block{i}/conv/w"), &[b.width, ch, b.filters], b.width * ch, b.filters, &mut rng),
                p.add_full(format!("clstm/path2/block{i}/conv/b"), &[b.filters], 0.0),
            );
            let bn = (
                p.add_full(format!("clstm/path2/block{i}/bn/scale"), &[b.filters], 1.0),
                p.add_full(format!("clstm/path2/block{i}/bn/shift"), &[b.filters], 0.0),
            );
            blocks.push(BlockIds { conv, bn });
            running.push(RunningStats::new(b.filters, config.bn_momentum));
            ch = b.filters;
        }
        let last_len = config.path2_lengths(timesteps)?.last().map(|l| l.1).unwrap_or(timesteps);
        let flat = last_len * ch;
        let dense = (
            p.add_glorot("clstm/path2/dense/w", &[flat, config.dense], flat, config.dense, &mut rng),
            p.add_full("clstm/path2/dense/b", &[config.dense], 0.0),
        );
        Ok(Self {
            config: config.clone(),
            rows,
            timesteps,
            params: p,
            running,
            frozen: false,
            path1_conv,
            lstm,
            blocks,
            dense,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim()
    }

    /// Stacks tensors into a `[n, timesteps, rows]` batch.
    pub fn batch(&self, tensors: &[&FeatureTensor]) -> Result<Tensor, ClstmError> {
        let mut data = Vec::with_capacity(tensors.len() * self.rows * self.timesteps);
        for t in tensors {
            if t.channels != self.rows || t.timesteps != self.timesteps {
                return Err(ClstmError::Shape(format!(
                    "tensor {} is {}×{}, model expects {}×{}",
                    t.burst_id, t.channels, t.timesteps, self.rows, self.timesteps
                )));
            }
            data.extend(t.to_sequence());
        }
        Ok(Tensor::new(data, &[tensors.len(), self.timesteps, self.rows]))
    }

    /// Features `[n, lstm_hidden + dense]` for `x [n, timesteps, rows]`.
    pub fn forward(&self, p: &Bound, x: &Tensor, mut stats: BatchStats<'_>) -> Result<Tensor, ClstmError> {
        let n = match x.shape() {
            [n, t, r] if *t == self.timesteps && *r == self.rows => *n,
            s => {
                return Err(ClstmError::Shape(format!(
                    "batch {s:?}, expected [n, {}, {}]",
                    self.timesteps, self.rows
                )))
            }
        };
        let c = conv1d(x, &p[self.path1_conv.0], &p[self.path1_conv.1], Activation::Identity)?;
        let w = LstmWeights { input: p[self.lstm.0].clone(), recurrent: p[self.lstm.1].clone(), bias: p[self.lstm.2].clone() };
        let (_, h_last) = lstm_sequence(&c, &w)?;

        let mut y = x.clone();
        for (i, (ids, cfg)) in self.blocks.iter().zip(&self.config.blocks).enumerate() {
            let conv = conv1d(&y, &p[ids.conv.0], &p[ids.conv.1], Activation::Relu)?;
            let len = conv.shape()[1];
            let flat = conv.reshape(&[n * len, cfg.filters]);
            let mode = match &mut stats {
                BatchStats::Train(rs) => BatchNormMode::Train(&mut rs[i]),
                BatchStats::Eval => BatchNormMode::Eval(&self.running[i]),
            };
            let normed = batchnorm(&flat, &p[ids.bn.0], &p[ids.bn.1], self.config.bn_eps, mode)?;
            y = maxpool1d(&normed.reshape(&[n, len, cfg.filters]), cfg.pool)?;
        }
        let flat_len = y.shape()[1] * y.shape()[2];
        let dense = affine(&y.reshape(&[n, flat_len]), &p[self.dense.0], &p[self.dense.1])?.relu();
        Ok(Tensor::concat_cols(&[h_last, dense]))
    }

    /// Evaluation-mode features for a batch, without recording a graph.
    pub fn features_batch(&self, tensors: &[&FeatureTensor]) -> Result<Vec<Vec<f64>>, ClstmError> {
        if tensors.is_empty() {
            return Ok(Vec::new());
        }
        no_grad(|| {
            let x = self.batch(tensors)?;
            let out = self.forward(&self.params.bind_frozen(), &x, BatchStats::Eval)?;
            Ok(out.values().chunks(self.feature_dim()).map(<[f64]>::to_vec).collect())
        })
    }

    pub fn to_named(&self) -> Vec<NamedTensor> {
        let mut out = self.params.entries().to_vec();
        for (i, r) in self.running.iter().enumerate() {
            out.push(NamedTensor::new(format!("clstm/path2/block{i}/bn/running_mean"), &[r.mean.len()], r.mean.clone()));
            out.push(NamedTensor::new(format!("clstm/path2/block{i}/bn/running_var"), &[r.var.len()], r.var.clone()));
        }
        out.push(NamedTensor::new("clstm/geometry", &[2], vec![self.rows as f64, self.timesteps as f64]));
        out.push(NamedTensor::scalar("clstm/frozen", if self.frozen { 1.0 } else { 0.0 }));
        out
    }

    /// Restores a model saved with [`ClstmModel::to_named`] under `config`.
    pub fn from_named(config: &ClstmConfig, tensors: &[NamedTensor]) -> Result<Self, ClstmError> {
        let find = |name: &str| {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| ClstmError::Shape(format!("checkpoint lacks {name}")))
        };
        let geom = &find("clstm/geometry")?.values;
        let mut model = Self::new(config, geom[0] as usize, geom[1] as usize)?;
        let problems = model.params.load_from(tensors);
        if !problems.is_empty() {
            return Err(ClstmError::Shape(format!("checkpoint missing or misshapen: {}", problems.join(", "))));
        }
        for (i, r) in model.running.iter_mut().enumerate() {
            for (field, dst) in [("running_mean", &mut r.mean), ("running_var", &mut r.var)] {
                let t = find(&format!("clstm/path2/block{i}/bn/{field}"))?;
                if t.values.len() != dst.len() {
                    return Err(ClstmError::Shape(format!("block {i} {field} has {} values", t.values.len())));
                }
                dst.clone_from(&t.values);
            }
        }
        model.frozen = find("clstm/frozen")?.values[0] != 0.0;
        Ok(model)
    }
}

/// Evaluation-mode features of every tensor, computed in parallel over
/// batches. Rows follow the input order.
pub fn extract_features(model: &ClstmModel, tensors: &[FeatureTensor]) -> Result<Vec<Vec<f64>>, ClstmError> {
    if !model.frozen {
        return Err(ClstmError::NotFrozen);
    }
    let refs: Vec<&FeatureTensor> = tensors.iter().collect();
    let chunks: Vec<&[&FeatureTensor]> = refs.chunks(64).collect();
    let parts = par::map(&chunks, |c| model.features_batch(c));
    let mut out = Vec::with_capacity(tensors.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Linear softmax classifier used to train the trunk; also usable on its own
/// as the plain deep-learning baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead {
    pub params: ParamStore,
    pub classes: usize,
}

impl SoftmaxHead {
    pub fn new(features: usize, classes: usize, seed: u64) -> Self {
        let mut p = ParamStore::new();
        let mut rng = seeded(seed);
        p.add_glorot("head/w", &[features, classes], features, classes, &mut rng);
        p.add_full("head/b", &[classes], 0.0);
        Self { params: p, classes }
    }

    pub fn logits(&self, p: &Bound, features: &Tensor) -> Result<Tensor, ClstmError> {
        Ok(affine(features, &p[ParamId(0)], &p[ParamId(1)])?)
    }

    /// Class probabilities for each feature row.
    pub fn probabilities(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ClstmError> {
        if features.is_empty() {
            return Ok(Vec::new());
        }
        let d = features[0].len();
        let x = Tensor::new(features.iter().flatten().copied().collect(), &[features.len(), d]);
        let logits = no_grad(|| self.logits(&self.params.bind_frozen(), &x))?;
        Ok(logits.values().chunks(self.classes).map(softmax).collect())
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
