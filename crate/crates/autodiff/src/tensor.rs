//! Dense `f64` tensors that record the operations producing them.
//!
//! Every tensor is an immutable node in a directed acyclic graph. Nodes that
//! require gradients keep a reference to the operation and the parent tensors
//! that produced them; [`crate::backward`] walks that graph in reverse.
//!
//! Primitive operations panic on shape misuse (the way slice indexing does).
//! The layer-level functions in [`crate::nn`] validate shapes up front and
//! return [`crate::AutodiffError`] instead.

use std::cell::Cell;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Whether newly created tensors record their producing operation.
pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(Cell::get)
}

/// Runs `f` with graph recording switched to `enabled`, restoring the previous
/// mode afterwards (also on unwind).
pub fn with_grad_mode<R>(enabled: bool, f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let prev = GRAD_ENABLED.with(|g| g.replace(enabled));
    let _restore = Restore(prev);
    f()
}

/// Runs `f` without recording any graph edges.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    with_grad_mode(false, f)
}

#[derive(Clone)]
pub struct Tensor(pub(crate) Rc<Node>);

pub(crate) struct Node {
    pub(crate) id: usize,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
    pub(crate) requires_grad: bool,
    pub(crate) grad_fn: Option<GradFn>,
}

pub(crate) struct GradFn {
    pub(crate) op: Op,
    pub(crate) parents: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale(f64),
    AddScalar,
    MatMul,
    Transpose,
    Reshape,
    Sum,
    Expand,
    SumRows,
    BroadcastRows,
    SumCols,
    BroadcastCols,
    Exp,
    Ln,
    Sqrt,
    Square,
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu(f64),
    Unfold { width: usize },
    Fold { width: usize },
    Gather(Rc<[usize]>),
    ScatterAdd(Rc<[usize]>),
    Index0(usize),
    Stack0,
    SliceCols { start: usize },
    PadCols { start: usize, len: usize },
    ConcatCols,
    Swap01,
}

// Long recurrent chains would otherwise drop recursively, one stack frame per
// node.
impl Drop for Node {
    fn drop(&mut self) {
        let Some(grad_fn) = self.grad_fn.take() else {
            return;
        };
        let mut pending = grad_fn.parents;
        while let Some(t) = pending.pop() {
            if let Ok(mut node) = Rc::try_unwrap(t.0) {
                if let Some(gf) = node.grad_fn.take() {
                    pending.extend(gf.parents);
                }
            }
        }
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, grad_fn: Option<GradFn>) -> Self {
        debug_assert_eq!(data.len(), numel(&shape), "values length must equal product of shape");
        Tensor(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad_fn,
        }))
    }

    pub(crate) fn from_op(data: Vec<f64>, shape: Vec<usize>, op: Op, parents: Vec<Tensor>) -> Self {
        let requires_grad = is_grad_enabled() && parents.iter().any(Tensor::requires_grad);
        let grad_fn = requires_grad.then_some(GradFn { op, parents });
        Self::build(data, shape, requires_grad, grad_fn)
    }

    /// A constant leaf. Panics if `data.len()` does not match `shape`.
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Self {
        assert_eq!(
            data.len(),
            numel(shape),
            "tensor of shape {shape:?} needs {} values, got {}",
            numel(shape),
            data.len()
        );
        Self::build(data, shape.to_vec(), false, None)
    }

    /// A leaf that gradients flow into.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Self {
        let t = Self::new(data, shape);
        Self::build(t.0.data.clone(), t.0.shape.clone(), true, None)
    }

    pub fn scalar(v: f64) -> Self {
        Self::build(vec![v], Vec::new(), false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Self::build(vec![v; numel(shape)], shape.to_vec(), false, None)
    }

    /// Copy of this tensor's values as a fresh leaf, cut from the graph.
    pub fn detach(&self) -> Tensor {
        Self::build(self.0.data.clone(), self.0.shape.clone(), false, None)
    }

    /// Copy of this tensor's values as a fresh leaf that requires gradients.
    pub fn detach_requiring_grad(&self) -> Tensor {
        Self::build(self.0.data.clone(), self.0.shape.clone(), true, None)
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    fn dims2(&self) -> (usize, usize) {
        match self.shape() {
            [r, c] => (*r, *c),
            s => panic!("expected a rank-2 tensor, got shape {s:?}"),
        }
    }

    fn dims3(&self) -> (usize, usize, usize) {
        match self.shape() {
            [a, b, c] => (*a, *b, *c),
            s => panic!("expected a rank-3 tensor, got shape {s:?}"),
        }
    }

    fn same_shape(&self, other: &Tensor, what: &str) {
        assert_eq!(self.shape(), other.shape(), "{what}: shape mismatch");
    }

    fn zip_with(&self, other: &Tensor, op: Op, f: impl Fn(f64, f64) -> f64) -> Tensor {
        self.same_shape(other, "elementwise op");
        let data = self.values().iter().zip(other.values()).map(|(&a, &b)| f(a, b)).collect();
        Tensor::from_op(data, self.shape().to_vec(), op, vec![self.clone(), other.clone()])
    }

    fn map(&self, op: Op, f: impl Fn(f64) -> f64) -> Tensor {
        let data = self.values().iter().map(|&a| f(a)).collect();
        Tensor::from_op(data, self.shape().to_vec(), op, vec![self.clone()])
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip_with(other, Op::Add, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip_with(other, Op::Sub, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        self.zip_with(other, Op::Mul, |a, b| a * b)
    }

    pub fn div(&self, other: &Tensor) -> Tensor {
        self.zip_with(other, Op::Div, |a, b| a / b)
    }

    pub fn neg(&self) -> Tensor {
        self.map(Op::Neg, |a| -a)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(Op::Scale(c), |a| a * c)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        self.map(Op::AddScalar, |a| a + c)
    }

    pub fn exp(&self) -> Tensor {
        self.map(Op::Exp, f64::exp)
    }

    pub fn ln(&self) -> Tensor {
        self.map(Op::Ln, f64::ln)
    }

    pub fn sqrt(&self) -> Tensor {
        self.map(Op::Sqrt, f64::sqrt)
    }

    pub fn square(&self) -> Tensor {
        self.map(Op::Square, |a| a * a)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(Op::Sigmoid, sigmoid)
    }

    pub fn tanh(&self) -> Tensor {
        self.map(Op::Tanh, f64::tanh)
    }

    pub fn relu(&self) -> Tensor {
        self.map(Op::Relu, |a| if a > 0.0 { a } else { 0.0 })
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        self.map(Op::LeakyRelu(slope), |a| if a > 0.0 { a } else { slope * a })
    }

    /// `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (n, k) = self.dims2();
        let (k2, m) = other.dims2();
        assert_eq!(k, k2, "matmul: inner dimensions {k} and {k2} differ");
        let data = matmul_raw(self.values(), other.values(), n, k, m);
        Tensor::from_op(data, vec![n, m], Op::MatMul, vec![self.clone(), other.clone()])
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = self.dims2();
        let src = self.values();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        Tensor::from_op(data, vec![c, r], Op::Transpose, vec![self.clone()])
    }

    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        assert_eq!(
            numel(shape),
            self.numel(),
            "reshape {:?} -> {shape:?} changes element count",
            self.shape()
        );
        Tensor::from_op(self.to_vec(), shape.to_vec(), Op::Reshape, vec![self.clone()])
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&self) -> Tensor {
        let s = self.values().iter().sum();
        Tensor::from_op(vec![s], Vec::new(), Op::Sum, vec![self.clone()])
    }

    pub fn mean(&self) -> Tensor {
        self.sum().scale(1.0 / self.numel() as f64)
    }

    /// Broadcasts a one-element tensor to `shape`.
    pub fn expand(&self, shape: &[usize]) -> Tensor {
        let v = self.item();
        Tensor::from_op(vec![v; numel(shape)], shape.to_vec(), Op::Expand, vec![self.clone()])
    }

    /// `[r, c] -> [c]`, summing over rows.
    pub fn sum_rows(&self) -> Tensor {
        let (r, c) = self.dims2();
        let src = self.values();
        let mut data = vec![0.0; c];
        for i in 0..r {
            for (acc, v) in data.iter_mut().zip(&src[i * c..(i + 1) * c]) {
                *acc += v;
            }
        }
        Tensor::from_op(data, vec![c], Op::SumRows, vec![self.clone()])
    }

    /// `[c] -> [n, c]`, repeating the vector as every row.
    pub fn broadcast_rows(&self, n: usize) -> Tensor {
        assert_eq!(self.shape().len(), 1, "broadcast_rows expects a vector");
        let mut data = Vec::with_capacity(n * self.numel());
        for _ in 0..n {
            data.extend_from_slice(self.values());
        }
        Tensor::from_op(data, vec![n, self.numel()], Op::BroadcastRows, vec![self.clone()])
    }

    /// `[r, c] -> [r]`, summing each row.
    pub fn sum_cols(&self) -> Tensor {
        let (_, c) = self.dims2();
        let data = self.values().chunks(c.max(1)).map(|row| row.iter().sum()).collect::<Vec<f64>>();
        let r = self.shape()[0];
        let data = if c == 0 { vec![0.0; r] } else { data };
        Tensor::from_op(data, vec![r], Op::SumCols, vec![self.clone()])
    }

    /// `[r] -> [r, c]`, repeating each element along its row.
    pub fn broadcast_cols(&self, c: usize) -> Tensor {
        assert_eq!(self.shape().len(), 1, "broadcast_cols expects a vector");
        let data = self.values().iter().flat_map(|&v| std::iter::repeat(v).take(c)).collect();
        Tensor::from_op(data, vec![self.numel(), c], Op::BroadcastCols, vec![self.clone()])
    }

    /// Sliding windows along the middle axis: `[n, len, ch] -> [n * (len - width + 1), width * ch]`.
    ///
    /// Row `(b, t)` holds `x[b, t..t + width, :]` flattened with the window
    /// offset as the slow index.
    pub fn unfold(&self, width: usize) -> Tensor {
        let (n, len, ch) = self.dims3();
        assert!(width >= 1 && width <= len, "unfold: width {width} invalid for length {len}");
        let steps = len - width + 1;
        let src = self.values();
        let row = width * ch;
        let mut data = Vec::with_capacity(n * steps * row);
        for b in 0..n {
            let base = b * len * ch;
            for t in 0..steps {
                data.extend_from_slice(&src[base + t * ch..base + (t + width) * ch]);
            }
        }
        Tensor::from_op(data, vec![n * steps, row], Op::Unfold { width }, vec![self.clone()])
    }

    /// Adjoint of [`Tensor::unfold`]: scatters window rows back onto `[n, len, ch]`, summing overlaps.
    pub fn fold(&self, shape: &[usize], width: usize) -> Tensor {
        let (n, len, ch) = match shape {
            [a, b, c] => (*a, *b, *c),
            s => panic!("fold target must be rank 3, got {s:?}"),
        };
        let steps = len + 1 - width;
        let (rows, row) = self.dims2();
        assert_eq!((rows, row), (n * steps, width * ch), "fold: column shape mismatch");
        let src = self.values();
        let mut data = vec![0.0; n * len * ch];
        for b in 0..n {
            let base = b * len * ch;
            for t in 0..steps {
                let cols = &src[(b * steps + t) * row..(b * steps + t + 1) * row];
                for (dst, v) in data[base + t * ch..base + (t + width) * ch].iter_mut().zip(cols) {
                    *dst += v;
                }
            }
        }
        Tensor::from_op(data, shape.to_vec(), Op::Fold { width }, vec![self.clone()])
    }

    /// `out[j] = self.flat[idx[j]]`, reshaped to `shape`.
    pub fn gather(&self, idx: Rc<[usize]>, shape: &[usize]) -> Tensor {
        assert_eq!(idx.len(), numel(shape), "gather: index count must match output shape");
        let src = self.values();
        let data = idx.iter().map(|&i| src[i]).collect();
        Tensor::from_op(data, shape.to_vec(), Op::Gather(idx), vec![self.clone()])
    }

    /// Adjoint of [`Tensor::gather`]: `out.flat[idx[j]] += self.flat[j]`.
    pub fn scatter_add(&self, idx: Rc<[usize]>, shape: &[usize]) -> Tensor {
        assert_eq!(idx.len(), self.numel(), "scatter_add: one index per element");
        let mut data = vec![0.0; numel(shape)];
        for (&i, v) in idx.iter().zip(self.values()) {
            data[i] += v;
        }
        Tensor::from_op(data, shape.to_vec(), Op::ScatterAdd(idx), vec![self.clone()])
    }

    /// Selects entry `i` along the leading axis.
    pub fn index0(&self, i: usize) -> Tensor {
        let shape = self.shape();
        assert!(!shape.is_empty() && i < shape[0], "index0: {i} out of range for {shape:?}");
        let inner = numel(&shape[1..]);
        let data = self.values()[i * inner..(i + 1) * inner].to_vec();
        Tensor::from_op(data, shape[1..].to_vec(), Op::Index0(i), vec![self.clone()])
    }

    /// Stacks equally-shaped tensors along a new leading axis.
    pub fn stack0(parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "stack0 of nothing");
        let inner = parts[0].shape().to_vec();
        let mut data = Vec::with_capacity(parts.len() * numel(&inner));
        for p in parts {
            assert_eq!(p.shape(), &inner[..], "stack0: parts differ in shape");
            data.extend_from_slice(p.values());
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&inner);
        Tensor::from_op(data, shape, Op::Stack0, parts.to_vec())
    }

    /// Columns `start..start + len` of a rank-2 tensor.
    pub fn slice_cols(&self, start: usize, len: usize) -> Tensor {
        let (r, c) = self.dims2();
        assert!(start + len <= c, "slice_cols: {start}+{len} exceeds {c} columns");
        let src = self.values();
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        Tensor::from_op(data, vec![r, len], Op::SliceCols { start }, vec![self.clone()])
    }

    /// Embeds a `[r, len]` tensor at column `start` of a zero `[r, total]` tensor.
    pub fn pad_cols(&self, start: usize, total: usize) -> Tensor {
        let (r, len) = self.dims2();
        assert!(start + len <= total, "pad_cols: {start}+{len} exceeds {total}");
        let src = self.values();
        let mut data = vec![0.0; r * total];
        for i in 0..r {
            data[i * total + start..i * total + start + len].copy_from_slice(&src[i * len..(i + 1) * len]);
        }
        Tensor::from_op(data, vec![r, total], Op::PadCols { start, len }, vec![self.clone()])
    }

    /// Concatenates rank-2 tensors with equal row counts along columns.
    pub fn concat_cols(parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let r = parts[0].dims2().0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                let (pr, pc) = p.dims2();
                assert_eq!(pr, r, "concat_cols: row counts differ");
                pc
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.values()[i * w..(i + 1) * w]);
            }
        }
        Tensor::from_op(data, vec![r, total], Op::ConcatCols, parts.to_vec())
    }

    /// `[a, b, c] -> [b, a, c]`.
    pub fn swap01(&self) -> Tensor {
        let (a, b, c) = self.dims3();
        let src = self.values();
        let mut data = vec![0.0; a * b * c];
        for i in 0..a {
            for j in 0..b {
                let from = (i * b + j) * c;
                let to = (j * a + i) * c;
                data[to..to + c].copy_from_slice(&src[from..from + c]);
            }
        }
        Tensor::from_op(data, vec![b, a, c], Op::Swap01, vec![self.clone()])
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    if n == 0 || m == 0 || k == 0 {
        return out;
    }
    // SAFETY: slice lengths are n*k, k*m and n*m with row-major strides.
    unsafe {
        matrixmultiply::dgemm(
            n,
            k,
            m,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            m as isize,
            1,
            0.0,
            out.as_mut_ptr(),
            m as isize,
            1,
        );
    }
    out
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.shape()).field("requires_grad", &self.requires_grad());
        if self.numel() <= 16 {
            s.field("values", &self.values());
        }
        if let Some(gf) = &self.0.grad_fn {
            s.field("op", &gf.op);
        }
        s.finish()
    }
}
