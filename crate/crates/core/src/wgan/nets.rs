use fdd_autodiff::{
    affine, conv1d, conv_output_len, lstm_sequence, maxpool1d, no_grad, pool_output_len, Activation, Bound,
    LstmWeights, NamedTensor, ParamId, ParamStore, Tensor,
};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{CriticConfig, GanError};
use crate::{seeded, SeedRng};

const LEAK: f64 = 0.2;

/// Scores bursts `[n, len]` with one unbounded real value each.
pub trait Critic {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Input length the critic was built for.
    fn input_len(&self) -> usize;
    /// Scores `[n]` for `x [n, len]` using the bound parameters.
    fn score(&self, p: &Bound, x: &Tensor) -> Result<Tensor, GanError>;
}

fn check_input(x: &Tensor, len: usize) -> Result<usize, GanError> {
    match x.shape() {
        [n, l] if *l == len => Ok(*n),
        s => Err(GanError::Shape(format!("critic expects [n, {len}], got {s:?}"))),
    }
}

/// Dense critic with leaky-ReLU hidden layers.
#[derive(Debug, Clone)]
pub struct MlpCritic {
    len: usize,
    layers: Vec<(ParamId, ParamId)>,
    params: ParamStore,
}

impl MlpCritic {
    pub fn new(len: usize, hidden: &[usize], rng: &mut SeedRng) -> Self {
        let mut params = ParamStore::new();
        let mut layers = Vec::new();
        let mut fan_in = len;
        for (i, &w) in hidden.iter().chain(std::iter::once(&1)).enumerate() {
            let wid = params.add_glorot(format!("critic/dense{i}/w"), &[fan_in, w], fan_in, w, rng);
            let bid = params.add_full(format!("critic/dense{i}/b"), &[w], 0.0);
            layers.push((wid, bid));
            fan_in = w;
        }
        Self { len, layers, params }
    }
}

impl Critic for MlpCritic {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn input_len(&self) -> usize {
        self.len
    }

    fn score(&self, p: &Bound, x: &Tensor) -> Result<Tensor, GanError> {
        let n = check_input(x, self.len)?;
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = affine(&h, &p[w], &p[b])?;
            if i < last {
                h = h.leaky_relu(LEAK);
            }
        }
        Ok(h.reshape(&[n]))
    }
}

#[derive(Debug, Clone)]
struct CriticBlock {
    filters: ParamId,
    bias: ParamId,
    pool: usize,
    lstm: (ParamId, ParamId, ParamId),
}

/// Stacked conv1d → max-pool → LSTM blocks; the final hidden state of the
/// last LSTM feeds a linear scoring head.
#[derive(Debug, Clone)]
pub struct ConvLstmCritic {
    len: usize,
    width: usize,
    blocks: Vec<CriticBlock>,
    head: (ParamId, ParamId),
    params: ParamStore,
}

impl ConvLstmCritic {
    pub fn new(
        len: usize,
        filters: &[usize],
        width: usize,
        pools: &[usize],
        hidden: usize,
        rng: &mut SeedRng,
    ) -> Result<Self, GanError> {
        if filters.len() != pools.len() || filters.is_empty() {
            return Err(GanError::Config("critic needs one pool per conv block".into()));
        }
        let mut params = ParamStore::new();
        let mut blocks = Vec::new();
        let mut ch = 1;
        let mut steps = len;
        for (i, (&f, &pool)) in filters.iter().zip(pools).enumerate() {
            steps = conv_output_len(steps, width)
                .and_then(|s| pool_output_len(s, pool))
                .ok_or_else(|| GanError::Config(format!("critic block {i} leaves no steps for input length {len}")))?;
            let fan_in = width * ch;
            let fid = params.add_glorot(format!("critic/block{i}/conv/w"), &[width, ch, f], fan_in, f, rng);
            let bid = params.add_full(format!("critic/block{i}/conv/b"), &[f], 0.0);
            let wi = params.add_glorot(format!("critic/block{i}/lstm/wi"), &[f, 4 * hidden], f, hidden, rng);
            let wr = params.add_glorot(format!("critic/block{i}/lstm/wr"), &[hidden, 4 * hidden], hidden, hidden, rng);
            let mut b = vec![0.0; 4 * hidden];
            b[hidden..2 * hidden].fill(1.0);
            let lb = params.add(format!("critic/block{i}/lstm/b"), &[4 * hidden], b);
            blocks.push(CriticBlock { filters: fid, bias: bid, pool, lstm: (wi, wr, lb) });
            ch = hidden;
        }
        let hw = params.add_glorot("critic/head/w", &[hidden, 1], hidden, 1, rng);
        let hb = params.add_full("critic/head/b", &[1], 0.0);
        Ok(Self { len, width, blocks, head: (hw, hb), params })
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

impl Critic for ConvLstmCritic {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn input_len(&self) -> usize {
        self.len
    }

    fn score(&self, p: &Bound, x: &Tensor) -> Result<Tensor, GanError> {
        let n = check_input(x, self.len)?;
        let mut seq = x.reshape(&[n, self.len, 1]);
        let mut last = None;
        for b in &self.blocks {
            let mut c = conv1d(&seq, &p[b.filters], &p[b.bias], Activation::LeakyRelu(LEAK))?;
            if b.pool > 1 {
                c = maxpool1d(&c, b.pool)?;
            }
            let w = LstmWeights {
                input: p[b.lstm.0].clone(),
                recurrent: p[b.lstm.1].clone(),
                bias: p[b.lstm.2].clone(),
            };
            let (s, h) = lstm_sequence(&c, &w)?;
            seq = s;
            last = Some(h);
        }
        let h = last.expect("at least one block");
        Ok(affine(&h, &p[self.head.0], &p[self.head.1])?.reshape(&[n]))
    }
}

/// Builds the critic described by `cfg` for bursts of `len` samples.
pub fn build_critic(cfg: &CriticConfig, len: usize, seed: u64) -> Result<Box<dyn Critic>, GanError> {
    let mut rng = seeded(seed);
    Ok(match cfg {
        CriticConfig::ConvLstm { filters, width, pools, lstm_hidden } => {
            Box::new(ConvLstmCritic::new(len, filters, *width, pools, *lstm_hidden, &mut rng)?)
        }
        CriticConfig::Mlp { hidden } => Box::new(MlpCritic::new(len, hidden, &mut rng)),
    })
}

/// Dense generator from standard-normal noise to a burst.
///
/// Layer widths run `len, len/2, len/4, len/2, len` with leaky-ReLU between
/// layers and a linear output. Outputs are standardized: [`GeneratorNet::sample`]
/// maps them back with `data_offset + data_scale · y`, the pooled mean and
/// standard deviation of the training bursts.
#[derive(Debug, Clone)]
pub struct GeneratorNet {
    len: usize,
    layers: Vec<(ParamId, ParamId)>,
    pub params: ParamStore,
    pub data_offset: f64,
    pub data_scale: f64,
    pub trained: bool,
}

impl GeneratorNet {
    pub fn widths(len: usize, min_width: usize) -> [usize; 5] {
        let w = |d: usize| (len / d).max(min_width).max(1);
        [w(1), w(2), w(4), w(2), len]
    }

    pub fn new(len: usize, min_width: usize, rng: &mut SeedRng) -> Self {
        let mut params = ParamStore::new();
        let mut layers = Vec::new();
        let mut fan_in = len;
        for (i, w) in Self::widths(len, min_width).into_iter().enumerate() {
            let wid = params.add_glorot(format!("gen/dense{i}/w"), &[fan_in, w], fan_in, w, rng);
            let bid = params.add_full(format!("gen/dense{i}/b"), &[w], 0.0);
            layers.push((wid, bid));
            fan_in = w;
        }
        Self { len, layers, params, data_offset: 0.0, data_scale: 1.0, trained: false }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Generator output `[n, len]` for noise `z [n, len]`, in scaled units.
    pub fn forward(&self, p: &Bound, z: &Tensor) -> Result<Tensor, GanError> {
        match z.shape() {
            [_, l] if *l == self.len => {}
            s => return Err(GanError::Shape(format!("generator expects [n, {}], got {s:?}", self.len))),
        }
        let mut h = z.clone();
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = affine(&h, &p[w], &p[b])?;
            if i < last {
                h = h.leaky_relu(LEAK);
            }
        }
        Ok(h)
    }

    /// Standard-normal noise `[n, len]`.
    pub fn noise<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Tensor {
        Tensor::new((0..n * self.len).map(|_| rng.sample(StandardNormal)).collect(), &[n, self.len])
    }

    /// `n` bursts in signal units.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>, GanError> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let z = self.noise(n, rng);
        let out = no_grad(|| self.forward(&self.params.bind_frozen(), &z))?;
        Ok(out.values().chunks(self.len).map(|r| r.iter().map(|v| self.data_offset + v * self.data_scale).collect()).collect())
    }

    pub fn to_named(&self) -> Vec<NamedTensor> {
        let mut out = self.params.entries().to_vec();
        out.push(NamedTensor::scalar("gen/data_offset", self.data_offset));
        out.push(NamedTensor::scalar("gen/data_scale", self.data_scale));
        out.push(NamedTensor::scalar("gen/trained", if self.trained { 1.0 } else { 0.0 }));
        out
    }

    /// Rebuilds a generator from checkpoint tensors; the architecture is read
    /// from the stored weight shapes.
    pub fn from_named(tensors: &[NamedTensor]) -> Result<Self, GanError> {
        let find = |name: &str| {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| GanError::Shape(format!("checkpoint lacks {name}")))
        };
        let first = find("gen/dense0/w")?;
        let len = first.shape[0];
        let mut params = ParamStore::new();
        let mut layers = Vec::new();
        let mut fan_in = len;
        for i in 0..5 {
            let w = find(&format!("gen/dense{i}/w"))?;
            let b = find(&format!("gen/dense{i}/b"))?;
            if w.shape.len() != 2 || w.shape[0] != fan_in || b.shape != [w.shape[1]] {
                return Err(GanError::Shape(format!("generator layer {i} has shapes {:?}/{:?}", w.shape, b.shape)));
            }
            fan_in = w.shape[1];
            layers.push((params.add(w.name.clone(), &w.shape, w.values.clone()), params.add(b.name.clone(), &b.shape, b.values.clone())));
        }
        if fan_in != len {
            return Err(GanError::Shape(format!("generator maps {len} to {fan_in}")));
        }
        let data_offset = find("gen/data_offset")?.values[0];
        let data_scale = find("gen/data_scale")?.values[0];
        let trained = find("gen/trained")?.values[0] != 0.0;
        Ok(Self { len, layers, params, data_offset, data_scale, trained })
    }
}
