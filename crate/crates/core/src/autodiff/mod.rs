//! Tape-based reverse-mode differentiation over dense `f64` matrices.
//!
//! The tape is define-by-run: every operation evaluates eagerly, caches its
//! value on a new node and records its parents. [`Tape::backward`] sweeps the
//! nodes in reverse order and accumulates gradients into the leaves that were
//! registered as parameters.
//!
//! ```
//! use minerf_core::autodiff::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Matrix::new(1, 2, vec![1.0, 2.0]).unwrap()).unwrap();
//! let x = tape.constant(Matrix::new(2, 1, vec![3.0, 4.0]).unwrap()).unwrap();
//! let y = tape.matmul(w, x).unwrap();
//! tape.backward(y).unwrap();
//! assert_eq!(tape.value(y).as_slice(), &[11.0]);
//! assert_eq!(tape.grad(w).unwrap().as_slice(), &[3.0, 4.0]);
//! ```

mod matrix;

use std::fmt;

use thiserror::Error;

pub use matrix::Matrix;
pub(crate) use matrix::gemm;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("data length {len} does not match shape {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite value at flat index {index} during {context}")]
    NonFinite { context: &'static str, index: usize },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("backward requires a 1x1 loss node, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("gradients already computed on this tape; call zero_grad before another backward")]
    GradientsPending,
    #[error("node {0} does not belong to this tape")]
    UnknownNode(usize),
    #[error("{0}")]
    Custom(String),
}

/// Handle to a node; only meaningful for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A fused operation with a hand-written vector-Jacobian product.
///
/// Used for kernels that would be wasteful to spell out as primitives,
/// such as the volume-rendering quadrature.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix, AutodiffError>;

    /// Returns one gradient per input, each shaped like that input.
    fn backward(&self, inputs: &[&Matrix], output: &Matrix, grad: &Matrix) -> Vec<Matrix>;
}

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Concat(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
    Mse(NodeId, Matrix),
    Custom(Box<dyn CustomOp>, Vec<NodeId>),
}

struct Node {
    op: Op,
    value: Matrix,
    is_param: bool,
    requires_grad: bool,
}

/// Append-only computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Option<Vec<Option<Matrix>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a leaf. Gradients are collected for it iff `is_param`.
    pub fn leaf(&mut self, value: Matrix, is_param: bool) -> Result<NodeId, AutodiffError> {
        if let Some(index) = value.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite {
                context: "leaf",
                index,
            });
        }
        Ok(self.push_node(Op::Leaf, value, is_param, is_param))
    }

    pub fn param(&mut self, value: Matrix) -> Result<NodeId, AutodiffError> {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Result<NodeId, AutodiffError> {
        self.leaf(value, false)
    }

    /// Cached forward value of a node.
    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        debug_assert_eq!(v.shape(), (1, 1));
        v.as_slice()[0]
    }

    pub fn is_param(&self, id: NodeId) -> bool {
        self.nodes[id.0].is_param
    }

    fn push_node(&mut self, op: Op, value: Matrix, is_param: bool, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            value,
            is_param,
            requires_grad,
        });
        id
    }

    fn check(&self, id: NodeId) -> Result<&Matrix, AutodiffError> {
        self.nodes
            .get(id.0)
            .map(|n| &n.value)
            .ok_or(AutodiffError::UnknownNode(id.0))
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn push(&mut self, op: Op, value: Matrix, parents: &[NodeId]) -> NodeId {
        let requires_grad = self.needs(parents);
        self.push_node(op, value, false, requires_grad)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let value = self.check(a)?.matmul(self.check(b)?)?;
        Ok(self.push(Op::MatMul(a, b), value, &[a, b]))
    }

    /// Elementwise sum. `b` may also be a `1 x cols` row broadcast over the rows of `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (va, vb) = (self.check(a)?, self.check(b)?);
        if va.shape() == vb.shape() {
            let mut value = va.clone();
            value.add_assign(vb);
            Ok(self.push(Op::Add(a, b), value, &[a, b]))
        } else if vb.rows() == 1 && vb.cols() == va.cols() {
            let mut value = va.clone();
            let cols = va.cols();
            if cols > 0 {
                for row in value.as_mut_slice().chunks_exact_mut(cols) {
                    for (x, y) in row.iter_mut().zip(vb.as_slice()) {
                        *x += y;
                    }
                }
            }
            Ok(self.push(Op::AddRow(a, b), value, &[a, b]))
        } else {
            Err(AutodiffError::Shape {
                op: "add",
                lhs: va.shape(),
                rhs: vb.shape(),
            })
        }
    }

    /// Columns of `a` followed by columns of `b`.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let value = self.check(a)?.hcat(self.check(b)?)?;
        Ok(self.push(Op::Concat(a, b), value, &[a, b]))
    }

    fn unary(&mut self, a: NodeId, make: fn(NodeId) -> Op, f: fn(f64) -> f64) -> Result<NodeId, AutodiffError> {
        let value = self.check(a)?.map(f);
        Ok(self.push(make(a), value, &[a]))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.unary(a, Op::Relu, |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.unary(a, Op::Sigmoid, sigmoid)
    }

    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.unary(a, Op::Softplus, softplus)
    }

    pub fn sin(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.unary(a, Op::Sin, f64::sin)
    }

    pub fn cos(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.unary(a, Op::Cos, f64::cos)
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> Result<NodeId, AutodiffError> {
        let value = self.check(a)?.map(|x| x * k);
        Ok(self.push(Op::Scale(a, k), value, &[a]))
    }

    /// Sum of all entries as a 1x1 node.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        let value = Matrix::filled(1, 1, self.check(a)?.sum());
        Ok(self.push(Op::Sum(a), value, &[a]))
    }

    /// Mean squared difference over every entry; zero for empty inputs.
    pub fn mse(&mut self, a: NodeId, target: Matrix) -> Result<NodeId, AutodiffError> {
        let va = self.check(a)?;
        if va.shape() != target.shape() {
            return Err(AutodiffError::Shape {
                op: "mse",
                lhs: va.shape(),
                rhs: target.shape(),
            });
        }
        if !target.is_finite() {
            return Err(AutodiffError::NonFinite {
                context: "mse target",
                index: target.as_slice().iter().position(|v| !v.is_finite()).unwrap_or(0),
            });
        }
        let n = va.len();
        let loss = if n == 0 {
            0.0
        } else {
            va.as_slice()
                .iter()
                .zip(target.as_slice())
                .map(|(x, t)| (x - t) * (x - t))
                .sum::<f64>()
                / n as f64
        };
        Ok(self.push(Op::Mse(a, target), Matrix::filled(1, 1, loss), &[a]))
    }

    /// Applies a fused operation.
    pub fn custom<O: CustomOp + 'static>(&mut self, op: O, inputs: &[NodeId]) -> Result<NodeId, AutodiffError> {
        let values = inputs
            .iter()
            .map(|&id| self.check(id))
            .collect::<Result<Vec<_>, _>>()?;
        let value = op.forward(&values)?;
        if let Some(index) = value.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite {
                context: op.name(),
                index,
            });
        }
        Ok(self.push(Op::Custom(Box::new(op), inputs.to_vec()), value, inputs))
    }

    /// Sign pattern of every ReLU input on the tape (`true` where the input is positive).
    ///
    /// Two evaluations with equal patterns lie on the same linear piece of
    /// every ReLU, which is what finite-difference checks need to know.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut pattern = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(a) = node.op {
                pattern.extend(self.nodes[a.0].value.as_slice().iter().map(|&x| x > 0.0));
            }
        }
        pattern
    }

    /// Reverse sweep from a scalar loss.
    ///
    /// Gradients accumulate into parameter leaves. A second call without
    /// [`Tape::zero_grad`] is rejected.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), AutodiffError> {
        if self.grads.is_some() {
            return Err(AutodiffError::GradientsPending);
        }
        let shape = self.check(loss)?.shape();
        if shape != (1, 1) {
            return Err(AutodiffError::NonScalarLoss(shape));
        }
        let mut adj: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if node.is_param {
                adj[i] = Some(g);
                continue;
            }
            let nodes = &self.nodes;
            let wants = |id: NodeId| nodes[id.0].requires_grad;
            let val = |id: NodeId| &nodes[id.0].value;
            let mut contributions: Vec<(NodeId, Matrix)> = Vec::with_capacity(2);
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        contributions.push((*a, gemm(&g, false, val(*b), true)));
                    }
                    if wants(*b) {
                        contributions.push((*b, gemm(val(*a), true, &g, false)));
                    }
                }
                Op::Add(a, b) => {
                    if wants(*a) {
                        contributions.push((*a, g.clone()));
                    }
                    if wants(*b) {
                        contributions.push((*b, g.clone()));
                    }
                }
                Op::AddRow(a, b) => {
                    if wants(*b) {
                        let cols = g.cols();
                        let mut col_sum = vec![0.0; cols];
                        if cols > 0 {
                            for row in g.as_slice().chunks_exact(cols) {
                                for (s, x) in col_sum.iter_mut().zip(row) {
                                    *s += x;
                                }
                            }
                        }
                        contributions.push((*b, Matrix::from_raw(1, cols, col_sum)));
                    }
                    if wants(*a) {
                        contributions.push((*a, g));
                    }
                }
                Op::Concat(a, b) => {
                    let wa = val(*a).cols();
                    if wants(*a) {
                        contributions.push((*a, g.columns(0, wa)));
                    }
                    if wants(*b) {
                        contributions.push((*b, g.columns(wa, g.cols() - wa)));
                    }
                }
                Op::Relu(a) => {
                    let x = val(*a);
                    contributions.push((*a, zip_map(&g, x, |g, x| if x > 0.0 { g } else { 0.0 })));
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    contributions.push((*a, zip_map(&g, y, |g, y| g * y * (1.0 - y))));
                }
                Op::Softplus(a) => {
                    contributions.push((*a, zip_map(&g, val(*a), |g, x| g * sigmoid(x))));
                }
                Op::Sin(a) => {
                    contributions.push((*a, zip_map(&g, val(*a), |g, x| g * x.cos())));
                }
                Op::Cos(a) => {
                    contributions.push((*a, zip_map(&g, val(*a), |g, x| -g * x.sin())));
                }
                Op::Scale(a, k) => {
                    let k = *k;
                    contributions.push((*a, g.map(|v| v * k)));
                }
                Op::Sum(a) => {
                    let (r, c) = val(*a).shape();
                    contributions.push((*a, Matrix::filled(r, c, g.as_slice()[0])));
                }
                Op::Mse(a, target) => {
                    let x = val(*a);
                    let n = x.len().max(1) as f64;
                    let s = 2.0 * g.as_slice()[0] / n;
                    contributions.push((*a, zip_map(x, target, |x, t| s * (x - t))));
                }
                Op::Custom(op, inputs) => {
                    let values: Vec<&Matrix> = inputs.iter().map(|&id| val(id)).collect();
                    let grads = op.backward(&values, &node.value, &g);
                    debug_assert_eq!(grads.len(), inputs.len());
                    for (&id, gi) in inputs.iter().zip(grads) {
                        if wants(id) {
                            debug_assert_eq!(gi.shape(), val(id).shape(), "{} gradient shape", op.name());
                            contributions.push((id, gi));
                        }
                    }
                }
            }
            for (id, gi) in contributions {
                match &mut adj[id.0] {
                    Some(acc) => acc.add_assign(&gi),
                    slot @ None => *slot = Some(gi),
                }
            }
        }

        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            if node.is_param {
                let (r, c) = node.value.shape();
                let g = adj.get_mut(i).and_then(Option::take).unwrap_or_else(|| Matrix::zeros(r, c));
                grads.push(Some(g));
            } else {
                grads.push(None);
            }
        }
        self.grads = Some(grads);
        Ok(())
    }

    /// Gradient of a parameter leaf after [`Tape::backward`]; `None` for
    /// non-parameter nodes or before backward ran.
    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.as_ref()?.get(id.0)?.as_ref()
    }

    /// Moves the gradient out of the tape.
    pub fn take_grad(&mut self, id: NodeId) -> Option<Matrix> {
        self.grads.as_mut()?.get_mut(id.0)?.take()
    }

    /// Drops accumulated gradients so that backward may run again.
    pub fn zero_grad(&mut self) {
        self.grads = None;
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_raw(a.rows(), a.cols(), data)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests;
