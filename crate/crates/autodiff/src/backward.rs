//! Reverse-mode traversal of the recorded graph.
//!
//! Every local derivative is itself written with [`Tensor`] operations, so when
//! `create_graph` is set the returned gradients sit on a live graph and can be
//! differentiated again.

use std::collections::{HashMap, HashSet};

use crate::tensor::{with_grad_mode, Op, Tensor};
use crate::AutodiffError;

enum Contribution {
    Dense(Tensor),
    /// Gradient for one entry along the leading axis (from [`Tensor::index0`]).
    Slice(usize, Tensor),
}

#[derive(Default)]
struct Accumulator {
    dense: Option<Tensor>,
    slices: Vec<(usize, Tensor)>,
}

impl Accumulator {
    fn push(&mut self, c: Contribution) {
        match c {
            Contribution::Dense(g) => {
                self.dense = Some(match self.dense.take() {
                    Some(acc) => acc.add(&g),
                    None => g,
                });
            }
            Contribution::Slice(i, g) => self.slices.push((i, g)),
        }
    }

    /// Collapses slice contributions into one stacked tensor; linear in the
    /// leading-axis length rather than quadratic.
    fn finish(self, shape: &[usize]) -> Tensor {
        let mut total = self.dense;
        if !self.slices.is_empty() {
            let mut parts: Vec<Option<Tensor>> = vec![None; shape[0]];
            for (i, g) in self.slices {
                parts[i] = Some(match parts[i].take() {
                    Some(acc) => acc.add(&g),
                    None => g,
                });
            }
            let inner = &shape[1..];
            let parts: Vec<Tensor> = parts.into_iter().map(|p| p.unwrap_or_else(|| Tensor::zeros(inner))).collect();
            let stacked = Tensor::stack0(&parts);
            total = Some(match total {
                Some(acc) => acc.add(&stacked),
                None => stacked,
            });
        }
        total.unwrap_or_else(|| Tensor::zeros(shape))
    }
}

fn local_gradients(op: &Op, parents: &[Tensor], out: &Tensor, g: &Tensor) -> Vec<Contribution> {
    use Contribution::Dense;
    let p0 = &parents[0];
    match op {
        Op::Add => vec![Dense(g.clone()), Dense(g.clone())],
        Op::Sub => vec![Dense(g.clone()), Dense(g.neg())],
        Op::Mul => vec![Dense(g.mul(&parents[1])), Dense(g.mul(p0))],
        Op::Div => {
            let b = &parents[1];
            vec![Dense(g.div(b)), Dense(g.mul(out).div(b).neg())]
        }
        Op::Neg => vec![Dense(g.neg())],
        Op::Scale(c) => vec![Dense(g.scale(*c))],
        Op::AddScalar => vec![Dense(g.clone())],
        Op::MatMul => {
            let b = &parents[1];
            vec![Dense(g.matmul(&b.transpose())), Dense(p0.transpose().matmul(g))]
        }
        Op::Transpose => vec![Dense(g.transpose())],
        Op::Reshape => vec![Dense(g.reshape(p0.shape()))],
        Op::Sum => vec![Dense(g.expand(p0.shape()))],
        Op::Expand => vec![Dense(g.sum().reshape(p0.shape()))],
        Op::SumRows => vec![Dense(g.broadcast_rows(p0.shape()[0]))],
        Op::BroadcastRows => vec![Dense(g.sum_rows())],
        Op::SumCols => vec![Dense(g.broadcast_cols(p0.shape()[1]))],
        Op::BroadcastCols => vec![Dense(g.sum_cols())],
        Op::Exp => vec![Dense(g.mul(out))],
        Op::Ln => vec![Dense(g.div(p0))],
        Op::Sqrt => vec![Dense(g.div(out).scale(0.5))],
        Op::Square => vec![Dense(g.mul(p0).scale(2.0))],
        Op::Sigmoid => vec![Dense(g.mul(&out.mul(&out.neg().add_scalar(1.0))))],
        Op::Tanh => vec![Dense(g.mul(&out.square().neg().add_scalar(1.0)))],
        Op::Relu => {
            let mask = p0.values().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
            vec![Dense(g.mul(&Tensor::new(mask, p0.shape())))]
        }
        Op::LeakyRelu(slope) => {
            let mask = p0.values().iter().map(|&v| if v > 0.0 { 1.0 } else { *slope }).collect();
            vec![Dense(g.mul(&Tensor::new(mask, p0.shape())))]
        }
        Op::Unfold { width } => vec![Dense(g.fold(p0.shape(), *width))],
        Op::Fold { width } => vec![Dense(g.unfold(*width))],
        Op::Gather(idx) => vec![Dense(g.scatter_add(idx.clone(), p0.shape()))],
        Op::ScatterAdd(idx) => vec![Dense(g.gather(idx.clone(), p0.shape()))],
        Op::Index0(i) => vec![Contribution::Slice(*i, g.clone())],
        Op::Stack0 => (0..parents.len()).map(|i| Dense(g.index0(i))).collect(),
        Op::SliceCols { start } => vec![Dense(g.pad_cols(*start, p0.shape()[1]))],
        Op::PadCols { start, len } => vec![Dense(g.slice_cols(*start, *len))],
        Op::ConcatCols => {
            let mut offset = 0;
            parents
                .iter()
                .map(|p| {
                    let w = p.shape()[1];
                    let part = g.slice_cols(offset, w);
                    offset += w;
                    Dense(part)
                })
                .collect()
        }
        Op::Swap01 => vec![Dense(g.swap01())],
    }
}

/// Gradients of a scalar `loss` with respect to each tensor in `wrt`.
///
/// With `create_graph` the returned gradients are recorded on the graph, so an
/// expression built from them can be passed to `backward` again (double
/// backpropagation). Without it the traversal runs in no-grad mode and the
/// results are constants.
///
/// A `wrt` tensor the loss does not depend on gets a zero gradient and a
/// warning.
pub fn backward(loss: &Tensor, wrt: &[&Tensor], create_graph: bool) -> Result<Vec<Tensor>, AutodiffError> {
    if loss.numel() != 1 {
        return Err(AutodiffError::NonScalarLoss(loss.shape().to_vec()));
    }
    let wrt_ids: HashSet<usize> = wrt.iter().filter(|t| t.requires_grad()).map(|t| t.id()).collect();

    // Post-order DFS; `needed` marks nodes lying on a path from the loss to some wrt tensor.
    let mut order: Vec<Tensor> = Vec::new();
    let mut needed: HashMap<usize, bool> = HashMap::new();
    if loss.requires_grad() {
        let mut visited: HashSet<usize> = HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(loss.clone(), 0)];
        visited.insert(loss.id());
        while let Some((node, next)) = stack.last_mut() {
            let parents: &[Tensor] = node.0.grad_fn.as_ref().map_or(&[], |gf| &gf.parents);
            if *next < parents.len() {
                let p = parents[*next].clone();
                *next += 1;
                if p.requires_grad() && visited.insert(p.id()) {
                    stack.push((p, 0));
                }
            } else {
                let is_needed =
                    wrt_ids.contains(&node.id()) || parents.iter().any(|p| needed.get(&p.id()).copied().unwrap_or(false));
                needed.insert(node.id(), is_needed);
                let (node, _) = stack.pop().expect("stack is non-empty");
                order.push(node);
            }
        }
    }

    let mut found: HashMap<usize, Tensor> = HashMap::new();
    with_grad_mode(create_graph, || {
        let mut acc: HashMap<usize, Accumulator> = HashMap::new();
        acc.entry(loss.id())
            .or_default()
            .push(Contribution::Dense(Tensor::full(loss.shape(), 1.0)));
        for node in order.iter().rev() {
            if !needed.get(&node.id()).copied().unwrap_or(false) {
                continue;
            }
            let Some(a) = acc.remove(&node.id()) else {
                continue;
            };
            let g = a.finish(node.shape());
            if wrt_ids.contains(&node.id()) {
                found.insert(node.id(), g.clone());
            }
            let Some(gf) = node.0.grad_fn.as_ref() else {
                continue;
            };
            let contributions = local_gradients(&gf.op, &gf.parents, node, &g);
            for (parent, c) in gf.parents.iter().zip(contributions) {
                if parent.requires_grad() && needed.get(&parent.id()).copied().unwrap_or(false) {
                    acc.entry(parent.id()).or_default().push(c);
                }
            }
        }
    });

    Ok(wrt
        .iter()
        .map(|t| {
            found.remove(&t.id()).unwrap_or_else(|| {
                log::warn!("backward: tensor {} (shape {:?}) is unreachable from the loss; gradient is zero", t.id(), t.shape());
                Tensor::zeros(t.shape())
            })
        })
        .collect())
}
