//! Extreme learning machine with optional class-weighted ridge solution.
//!
//! The hidden layer `H_ij = φ(a_j · x_i + b_j)` is random and frozen; only
//! the output weights β are solved, in closed form:
//!
//! * `N ≥ K`: `(I/C + HᵀWH) β = HᵀWY`
//! * `N < K`: `β = Hᵀ u` with `(W⁻¹/C + HHᵀ) u = Y`
//!
//! Both systems are symmetric positive definite and are solved by Cholesky
//! factorization. Without weighting `W = I`.

use fdd_autodiff::NamedTensor;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{par, seeded};

#[derive(Debug, Error)]
pub enum ElmError {
    #[error("shape: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no labels given")]
    NoLabels,
    #[error("system is numerically singular (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("non-finite values in the {0}")]
    NonFinite(&'static str),
    #[error("model has no output weights; fit it first")]
    Unsolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenActivation {
    Sigmoid,
    Tanh,
    Identity,
}

impl HiddenActivation {
    fn apply(self, v: f64) -> f64 {
        match self {
            HiddenActivation::Sigmoid => {
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (1.0 + e)
                }
            }
            HiddenActivation::Tanh => v.tanh(),
            HiddenActivation::Identity => v,
        }
    }

    fn code(self) -> f64 {
        match self {
            HiddenActivation::Sigmoid => 0.0,
            HiddenActivation::Tanh => 1.0,
            HiddenActivation::Identity => 2.0,
        }
    }

    fn from_code(c: f64) -> Option<Self> {
        match c as i64 {
            0 => Some(HiddenActivation::Sigmoid),
            1 => Some(HiddenActivation::Tanh),
            2 => Some(HiddenActivation::Identity),
            _ => None,
        }
    }
}

/// Which normal-equation form [`solve_beta`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// `N ≥ K` → primal, otherwise dual.
    Auto,
    /// `K × K` system.
    Primal,
    /// `N × N` system.
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElmConfig {
    pub hidden: usize,
    pub c: f64,
    pub weighting: bool,
    pub activation: HiddenActivation,
    pub seed: u64,
}

impl Default for ElmConfig {
    fn default() -> Self {
        Self { hidden: 150, c: 100.0, weighting: true, activation: HiddenActivation::Sigmoid, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElmModel {
    pub activation: HiddenActivation,
    /// `a_j` as columns, `p × K`.
    pub weights: DMatrix<f64>,
    /// `b_j`, length `K`.
    pub biases: DVector<f64>,
    /// `K × classes`, present once solved.
    pub beta: Option<DMatrix<f64>>,
    pub c: f64,
    pub weighted: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// `N × classes` raw outputs `Hβ`.
    pub scores: DMatrix<f64>,
}

impl ElmModel {
    /// Hidden layer drawn from `U(−1, 1)` with the config's seed.
    pub fn random(input_dim: usize, config: &ElmConfig) -> Result<Self, ElmError> {
        if config.hidden == 0 {
            return Err(ElmError::Config("hidden size K must be at least 1".into()));
        }
        if input_dim == 0 {
            return Err(ElmError::Config("input dimension must be at least 1".into()));
        }
        let mut rng = seeded(config.seed);
        let weights = DMatrix::from_fn(input_dim, config.hidden, |_, _| rng.gen_range(-1.0..1.0));
        let biases = DVector::from_fn(config.hidden, |_, _| rng.gen_range(-1.0..1.0));
        Ok(Self {
            activation: config.activation,
            weights,
            biases,
            beta: None,
            c: config.c,
            weighted: config.weighting,
            seed: config.seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.weights.ncols()
    }

    /// `H` for the rows of `x` (`N × p`).
    pub fn hidden_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ElmError> {
        if x.ncols() != self.input_dim() {
            return Err(ElmError::Shape(format!("{} features for a {}-input model", x.ncols(), self.input_dim())));
        }
        let mut h = x * &self.weights;
        for mut row in h.row_iter_mut() {
            for (v, b) in row.iter_mut().zip(self.biases.iter()) {
                *v = self.activation.apply(*v + b);
            }
        }
        Ok(h)
    }

    /// Scores `Hβ` and argmax labels (first maximum wins), computed in row
    /// blocks across the worker pool.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction, ElmError> {
        let beta = self.beta.as_ref().ok_or(ElmError::Unsolved)?;
        if x.ncols() != self.input_dim() {
            return Err(ElmError::Shape(format!("{} features for a {}-input model", x.ncols(), self.input_dim())));
        }
        const BLOCK: usize = 256;
        let starts: Vec<usize> = (0..x.nrows()).step_by(BLOCK).collect();
        let blocks = par::map(&starts, |&s| {
            let rows = BLOCK.min(x.nrows() - s);
            let h = self.hidden_matrix(&x.rows(s, rows).into_owned()).expect("shape checked above");
            h * beta
        });
        let mut scores = DMatrix::zeros(x.nrows(), beta.ncols());
        for (s, b) in starts.iter().zip(blocks) {
            scores.rows_mut(*s, b.nrows()).copy_from(&b);
        }
        let labels = scores.row_iter().map(|r| argmax(r.iter().copied())).collect();
        Ok(Prediction { labels, scores })
    }

    pub fn to_named(&self) -> Vec<NamedTensor> {
        let mut out = vec![
            NamedTensor::new("elm/weights", &[self.weights.nrows(), self.weights.ncols()], row_major(&self.weights)),
            NamedTensor::new("elm/biases", &[self.biases.len()], self.biases.iter().copied().collect()),
            NamedTensor::scalar("elm/c", self.c),
            NamedTensor::scalar("elm/weighted", if self.weighted { 1.0 } else { 0.0 }),
            NamedTensor::scalar("elm/activation", self.activation.code()),
            NamedTensor::scalar("elm/seed", self.seed as f64),
        ];
        if let Some(b) = &self.beta {
            out.push(NamedTensor::new("elm/beta", &[b.nrows(), b.ncols()], row_major(b)));
        }
        out
    }

    pub fn from_named(ts: &[NamedTensor]) -> Option<Self> {
        let get = |n: &str| ts.iter().find(|t| t.name == n);
        let mat = |t: &NamedTensor| match t.shape.as_slice() {
            [r, c] => Some(DMatrix::from_row_slice(*r, *c, &t.values)),
            _ => None,
        };
        let weights = mat(get("elm/weights")?)?;
        let biases = DVector::from_vec(get("elm/biases")?.values.clone());
        let beta = match get("elm/beta") {
            Some(t) => Some(mat(t)?),
            None => None,
        };
        Some(Self {
            activation: HiddenActivation::from_code(get("elm/activation")?.values[0])?,
            weights,
            biases,
            beta,
            c: get("elm/c")?.values[0],
            weighted: get("elm/weighted")?.values[0] != 0.0,
            seed: get("elm/seed")?.values[0] as u64,
        })
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Index of the first maximum.
pub(crate) fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in it.enumerate() {
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map_or(0, |(i, _)| i)
}

/// `w_i = 1 / |class of sample i|`.
pub fn class_weights(labels: &[usize]) -> Result<Vec<f64>, ElmError> {
    if labels.is_empty() {
        return Err(ElmError::NoLabels);
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    Ok(labels.iter().map(|&l| 1.0 / counts[l] as f64).collect())
}

/// `N × classes` indicator matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        y[(i, l)] = 1.0;
    }
    y
}

fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Condition numbers beyond this are treated as singular.
const MAX_CONDITION: f64 = 1e14;

fn spd_solve(a: DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, ElmError> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(ElmError::NonFinite("normal equations"));
    }
    let Some(ch) = a.clone().cholesky() else {
        return Err(ElmError::Singular { condition: condition_estimate(&a) });
    };
    // cond(A) ≈ (max L_ii / min L_ii)², a cheap lower bound.
    let diag = ch.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    if !(lo > 0.0) || (hi / lo).powi(2) > MAX_CONDITION {
        return Err(ElmError::Singular { condition: condition_estimate(&a) });
    }
    let x = ch.solve(b);
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(ElmError::Singular { condition: condition_estimate(&a) })
    }
}

/// Output weights for hidden matrix `h` (`N × K`), targets `y` (`N × m`),
/// ridge parameter `c` and optional per-sample weights.
pub fn solve_beta(
    h: &DMatrix<f64>,
    y: &DMatrix<f64>,
    c: f64,
    w: Option<&[f64]>,
    branch: Branch,
) -> Result<DMatrix<f64>, ElmError> {
    let (n, k) = h.shape();
    if y.nrows() != n {
        return Err(ElmError::Shape(format!("H has {n} rows, Y has {}", y.nrows())));
    }
    if !(c > 0.0) {
        return Err(ElmError::Config(format!("C must be positive, got {c}")));
    }
    if let Some(w) = w {
        if w.len() != n {
            return Err(ElmError::Shape(format!("{} weights for {n} samples", w.len())));
        }
        if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ElmError::Config("sample weights must be positive and finite".into()));
        }
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(ElmError::NonFinite("hidden matrix"));
    }
    let primal = match branch {
        Branch::Auto => n >= k,
        Branch::Primal => true,
        Branch::Dual => false,
    };
    if primal {
        // Hᵀ W, formed by scaling the columns of Hᵀ.
        let mut htw = h.transpose();
        if let Some(w) = w {
            for (j, mut col) in htw.column_iter_mut().enumerate() {
                col *= w[j];
            }
        }
        let mut a = &htw * h;
        for i in 0..k {
            a[(i, i)] += 1.0 / c;
        }
        spd_solve(a, &(&htw * y))
    } else {
        let mut a = h * h.transpose();
        for i in 0..n {
            a[(i, i)] += w.map_or(1.0, |w| 1.0 / w[i]) / c;
        }
        let u = spd_solve(a, y)?;
        Ok(h.transpose() * u)
    }
}

/// Draws the hidden layer, builds `H` and solves β, weighted by
/// [`class_weights`] when the config asks for it.
pub fn fit_welm(x: &DMatrix<f64>, labels: &[usize], classes: usize, config: &ElmConfig) -> Result<ElmModel, ElmError> {
    if labels.len() != x.nrows() {
        return Err(ElmError::Shape(format!("{} labels for {} rows", labels.len(), x.nrows())));
    }
    if labels.is_empty() {
        return Err(ElmError::NoLabels);
    }
    if labels.iter().any(|&l| l >= classes) {
        return Err(ElmError::Shape(format!("label outside 0..{classes}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ElmError::NonFinite("feature matrix"));
    }
    let mut model = ElmModel::random(x.ncols(), config)?;
    let h = model.hidden_matrix(x)?;
    let y = one_hot(labels, classes);
    let w = if config.weighting { Some(class_weights(labels)?) } else { None };
    model.beta = Some(solve_beta(&h, &y, config.c, w.as_deref(), Branch::Auto)?);
    Ok(model)
}
