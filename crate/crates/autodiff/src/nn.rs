//! Layer building blocks: dense, 1-D convolution, max pooling, batch
//! normalization and the LSTM cell.
//!
//! Sequence tensors use a channels-last layout `[batch, length, channels]`.

use std::rc::Rc;

use rand::Rng;

use crate::tensor::Tensor;
use crate::AutodiffError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, t: &Tensor) -> Tensor {
        match self {
            Activation::Identity => t.clone(),
            Activation::Relu => t.relu(),
            Activation::LeakyRelu(s) => t.leaky_relu(s),
            Activation::Sigmoid => t.sigmoid(),
            Activation::Tanh => t.tanh(),
        }
    }
}

fn shape_err(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::Shape { op, detail }
}

/// `input · weight + bias` for `input [n, p]`, `weight [p, q]`, `bias [q]`.
pub fn affine(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, AutodiffError> {
    let n = match (input.shape(), weight.shape(), bias.shape()) {
        ([n, p], [p2, q], [q2]) if p == p2 && q == q2 => *n,
        (a, b, c) => {
            return Err(shape_err("affine", format!("input {a:?}, weight {b:?}, bias {c:?}")));
        }
    };
    Ok(input.matmul(weight).add(&bias.broadcast_rows(n)))
}

/// Output length of a unit-stride valid convolution.
pub fn conv_output_len(len: usize, width: usize) -> Option<usize> {
    (width >= 1 && width <= len).then(|| len - width + 1)
}

/// Output length of non-overlapping max pooling with window `pool`.
pub fn pool_output_len(len: usize, pool: usize) -> Option<usize> {
    (pool >= 1 && pool <= len).then(|| (len - pool) / pool + 1)
}

/// Unit-stride valid convolution `c_t = φ(u · x[t..t+m] + b)` for every filter.
///
/// `input` is `[n, len, channels]`, `filters` is `[width, channels, count]`,
/// `bias` is `[count]`; the result is `[n, len - width + 1, count]`.
pub fn conv1d(input: &Tensor, filters: &Tensor, bias: &Tensor, act: Activation) -> Result<Tensor, AutodiffError> {
    let (n, len, ch) = match input.shape() {
        [n, l, c] => (*n, *l, *c),
        s => return Err(shape_err("conv1d", format!("input must be [n, len, channels], got {s:?}"))),
    };
    let (width, fch, count) = match filters.shape() {
        [m, c, f] => (*m, *c, *f),
        s => return Err(shape_err("conv1d", format!("filters must be [width, channels, count], got {s:?}"))),
    };
    if fch != ch {
        return Err(shape_err("conv1d", format!("input has {ch} channels, filters expect {fch}")));
    }
    if bias.shape() != [count] {
        return Err(shape_err("conv1d", format!("bias {:?} for {count} filters", bias.shape())));
    }
    let steps = conv_output_len(len, width).ok_or(AutodiffError::EmptyOutput {
        op: "conv1d",
        len,
        window: width,
    })?;
    let cols = input.unfold(width);
    let w = filters.reshape(&[width * ch, count]);
    let out = cols.matmul(&w).add(&bias.broadcast_rows(n * steps));
    Ok(act.apply(&out).reshape(&[n, steps, count]))
}

/// Non-overlapping max pooling along the length axis of `[n, len, channels]`.
///
/// Gradients are routed to the first maximal element of each window.
pub fn maxpool1d(input: &Tensor, pool: usize) -> Result<Tensor, AutodiffError> {
    let (n, len, ch) = match input.shape() {
        [n, l, c] => (*n, *l, *c),
        s => return Err(shape_err("maxpool1d", format!("input must be [n, len, channels], got {s:?}"))),
    };
    let out_len = pool_output_len(len, pool).ok_or(AutodiffError::EmptyOutput {
        op: "maxpool1d",
        len,
        window: pool,
    })?;
    let x = input.values();
    let mut idx = Vec::with_capacity(n * out_len * ch);
    for b in 0..n {
        for w in 0..out_len {
            for c in 0..ch {
                let mut best = (b * len + w * pool) * ch + c;
                for k in 1..pool {
                    let i = (b * len + w * pool + k) * ch + c;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                idx.push(best);
            }
        }
    }
    Ok(input.gather(Rc::from(idx), &[n, out_len, ch]))
}

/// Exponentially averaged per-feature statistics used by batch
/// normalization in evaluation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
}

impl RunningStats {
    pub fn new(features: usize, momentum: f64) -> Self {
        Self {
            mean: vec![0.0; features],
            var: vec![1.0; features],
            momentum,
        }
    }
}

pub enum BatchNormMode<'a> {
    /// Normalize with batch statistics and fold them into the running averages.
    Train(&'a mut RunningStats),
    /// Normalize with the running averages.
    Eval(&'a RunningStats),
}

/// Batch normalization of `input [rows, features]` followed by the learnable
/// per-feature `scale` and `shift`.
///
/// Training mode uses the biased batch variance. A single-row batch has zero
/// variance; it is normalized against `eps` alone after a warning.
pub fn batchnorm(
    input: &Tensor,
    scale: &Tensor,
    shift: &Tensor,
    eps: f64,
    mode: BatchNormMode<'_>,
) -> Result<Tensor, AutodiffError> {
    let (rows, feats) = match input.shape() {
        [r, f] => (*r, *f),
        s => return Err(shape_err("batchnorm", format!("input must be [rows, features], got {s:?}"))),
    };
    if scale.shape() != [feats] || shift.shape() != [feats] {
        return Err(shape_err(
            "batchnorm",
            format!("scale {:?} / shift {:?} for {feats} features", scale.shape(), shift.shape()),
        ));
    }
    if eps <= 0.0 {
        return Err(shape_err("batchnorm", format!("epsilon must be positive, got {eps}")));
    }
    let normalized = match mode {
        BatchNormMode::Train(stats) => {
            if stats.mean.len() != feats {
                return Err(shape_err("batchnorm", format!("running stats sized {}", stats.mean.len())));
            }
            if rows == 1 {
                log::warn!("batchnorm: batch of one row in training mode; variance is degenerate");
            }
            let inv = 1.0 / rows as f64;
            let mean = input.sum_rows().scale(inv);
            let centered = input.sub(&mean.broadcast_rows(rows));
            let var = centered.square().sum_rows().scale(inv);
            let denom = var.add_scalar(eps).sqrt();
            let m = stats.momentum;
            for (r, b) in stats.mean.iter_mut().zip(mean.values()) {
                *r = (1.0 - m) * *r + m * b;
            }
            for (r, b) in stats.var.iter_mut().zip(var.values()) {
                *r = (1.0 - m) * *r + m * b;
            }
            centered.div(&denom.broadcast_rows(rows))
        }
        BatchNormMode::Eval(stats) => {
            if stats.mean.len() != feats {
                return Err(shape_err("batchnorm", format!("running stats sized {}", stats.mean.len())));
            }
            let mean = Tensor::new(stats.mean.clone(), &[feats]);
            let denom = Tensor::new(stats.var.iter().map(|v| (v + eps).sqrt()).collect(), &[feats]);
            input.sub(&mean.broadcast_rows(rows)).div(&denom.broadcast_rows(rows))
        }
    };
    Ok(normalized.mul(&scale.broadcast_rows(rows)).add(&shift.broadcast_rows(rows)))
}

/// LSTM gate weights; gate blocks are ordered input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct LstmWeights {
    /// `[input, 4 * hidden]`
    pub input: Tensor,
    /// `[hidden, 4 * hidden]`
    pub recurrent: Tensor,
    /// `[4 * hidden]`
    pub bias: Tensor,
}

impl LstmWeights {
    pub fn hidden(&self) -> usize {
        self.recurrent.shape()[0]
    }

    fn check(&self) -> Result<(usize, usize), AutodiffError> {
        match (self.input.shape(), self.recurrent.shape(), self.bias.shape()) {
            ([i, g], [h, g2], [g3]) if *g == 4 * h && g2 == g && g3 == g => Ok((*i, *h)),
            (a, b, c) => Err(shape_err("lstm", format!("weights input {a:?}, recurrent {b:?}, bias {c:?}"))),
        }
    }
}

fn lstm_gates(pre: &Tensor, c: &Tensor, hidden: usize) -> (Tensor, Tensor) {
    let i = pre.slice_cols(0, hidden).sigmoid();
    let f = pre.slice_cols(hidden, hidden).sigmoid();
    let g = pre.slice_cols(2 * hidden, hidden).tanh();
    let o = pre.slice_cols(3 * hidden, hidden).sigmoid();
    let c_next = f.mul(c).add(&i.mul(&g));
    let h_next = o.mul(&c_next.tanh());
    (h_next, c_next)
}

/// One LSTM step on `x [n, input]` with state `h, c [n, hidden]`.
pub fn lstm_step(x: &Tensor, h: &Tensor, c: &Tensor, w: &LstmWeights) -> Result<(Tensor, Tensor), AutodiffError> {
    let (inp, hidden) = w.check()?;
    let n = match x.shape() {
        [n, i] if *i == inp => *n,
        s => return Err(shape_err("lstm_step", format!("x {s:?} for input width {inp}"))),
    };
    if h.shape() != [n, hidden] || c.shape() != [n, hidden] {
        return Err(shape_err("lstm_step", format!("state {:?}/{:?}, expected [{n}, {hidden}]", h.shape(), c.shape())));
    }
    let pre = x.matmul(&w.input).add(&h.matmul(&w.recurrent)).add(&w.bias.broadcast_rows(n));
    Ok(lstm_gates(&pre, c, hidden))
}

/// Runs an LSTM from a zero state over `x [n, steps, input]`.
///
/// Returns the hidden sequence `[n, steps, hidden]` and the final hidden
/// state `[n, hidden]`. Input projections for all steps are computed in one
/// matrix product.
pub fn lstm_sequence(x: &Tensor, w: &LstmWeights) -> Result<(Tensor, Tensor), AutodiffError> {
    let (inp, hidden) = w.check()?;
    let (n, steps) = match x.shape() {
        [n, t, i] if *i == inp && *t >= 1 => (*n, *t),
        s => return Err(shape_err("lstm_sequence", format!("x {s:?} for input width {inp}"))),
    };
    let projected = x
        .swap01()
        .reshape(&[steps * n, inp])
        .matmul(&w.input)
        .add(&w.bias.broadcast_rows(steps * n))
        .reshape(&[steps, n, 4 * hidden]);
    let mut h = Tensor::zeros(&[n, hidden]);
    let mut c = Tensor::zeros(&[n, hidden]);
    let mut outputs = Vec::with_capacity(steps);
    for t in 0..steps {
        let pre = projected.index0(t).add(&h.matmul(&w.recurrent));
        let (h2, c2) = lstm_gates(&pre, &c, hidden);
        h = h2;
        c = c2;
        outputs.push(h.clone());
    }
    let seq = Tensor::stack0(&outputs).swap01();
    Ok((seq, h))
}

/// Uniform samples in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(count: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    (0..count).map(|_| rng.gen_range(-limit..=limit)).collect()
}
