//! Named parameter storage shared by the networks.
//!
//! Parameters live as plain `Vec<f64>` so trained models are `Send + Sync`;
//! each forward pass binds them into fresh graph leaves.

use rand::Rng;

use crate::nn::glorot_uniform;
use crate::tensor::{no_grad, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: &[usize], values: Vec<f64>) -> Self {
        assert_eq!(values.len(), shape.iter().product::<usize>(), "values/shape mismatch");
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            values,
        }
    }

    pub fn scalar(name: impl Into<String>, v: f64) -> Self {
        Self::new(name, &[1], vec![v])
    }
}

/// Index of a parameter within its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<NamedTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], values: Vec<f64>) -> ParamId {
        self.entries.push(NamedTensor::new(name, shape, values));
        ParamId(self.entries.len() - 1)
    }

    /// Adds a parameter initialized uniformly in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn add_glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let n = shape.iter().product();
        self.add(name, shape, glorot_uniform(n, fan_in, fan_out, rng))
    }

    pub fn add_full(&mut self, name: impl Into<String>, shape: &[usize], v: f64) -> ParamId {
        let n = shape.iter().product();
        self.add(name, shape, vec![v; n])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &NamedTensor {
        &self.entries[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut NamedTensor {
        &mut self.entries[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&NamedTensor> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedTensor> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut NamedTensor> {
        self.entries.iter_mut()
    }

    pub fn entries(&self) -> &[NamedTensor] {
        &self.entries
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    /// Fresh leaves that gradients flow into, one per parameter.
    pub fn bind(&self) -> Bound {
        Bound(self.entries.iter().map(|e| Tensor::param(e.values.clone(), &e.shape)).collect())
    }

    /// Constant leaves for inference.
    pub fn bind_frozen(&self) -> Bound {
        no_grad(|| Bound(self.entries.iter().map(|e| Tensor::new(e.values.clone(), &e.shape)).collect()))
    }

    /// Replaces the values of parameters present in `tensors` by name.
    ///
    /// Returns the names that were expected but missing, or whose shape differs.
    pub fn load_from(&mut self, tensors: &[NamedTensor]) -> Vec<String> {
        let mut problems = Vec::new();
        for e in &mut self.entries {
            match tensors.iter().find(|t| t.name == e.name) {
                Some(t) if t.shape == e.shape => e.values.clone_from(&t.values),
                _ => problems.push(e.name.clone()),
            }
        }
        problems
    }
}

/// Graph leaves bound from a [`ParamStore`], indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Bound(pub Vec<Tensor>);

impl Bound {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }

    pub fn leaves(&self) -> Vec<&Tensor> {
        self.0.iter().collect()
    }
}

impl std::ops::Index<ParamId> for Bound {
    type Output = Tensor;

    fn index(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }
}
