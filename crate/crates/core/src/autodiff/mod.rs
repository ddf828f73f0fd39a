//! Symbolic reverse-mode differentiation over dense tensors.
//!
//! A [`Record`] is an append-only list of primitive ops. Nodes are created
//! through builder methods that check shapes eagerly; numbers only flow when
//! the record is evaluated with concrete input tensors. Differentiation
//! ([`Record::grad`]) appends the adjoint computation to the same record, so
//! gradients can themselves be differentiated. That is how
//! [`Record::hessian_vector_product`] gets exact `Hv` products without
//! materializing a Hessian: it differentiates `gᵀv` with `v` held constant.
//!
//! ```
//! use sparsetrain_core::autodiff::Record;
//! use sparsetrain_core::Tensor;
//!
//! // L = ½ wᵀ A w with A = diag(2, 4)
//! let mut rec = Record::<f64>::new();
//! let w = rec.input(&[2]).unwrap();
//! let a = rec.constant(Tensor::vector(vec![2.0, 4.0]));
//! let aw = rec.mul(a, w).unwrap();
//! let waw = rec.mul(w, aw).unwrap();
//! let s = rec.sum(waw).unwrap();
//! let loss = rec.scale(s, 0.5).unwrap();
//! let g = rec.grad(loss, &[w]).unwrap();
//! let out = rec.eval(&[Tensor::vector(vec![1.0, 1.0])], &[g.nodes[0]]).unwrap();
//! assert_eq!(out[0].data(), &[2.0, 4.0]);
//! ```

mod eval;
mod grad;
pub mod oracle;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{check_shape, shape_len, Tensor};

pub use self::grad::Gradients;

/// Handle to a value in a [`Record`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Node(pub(crate) usize);

impl Node {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op<T> {
    Input(usize),
    Const(Tensor<T>),
    MatMul(Node, Node),
    Transpose(Node),
    Reshape(Node),
    Add(Node, Node),
    Sub(Node, Node),
    Mul(Node, Node),
    Scale(Node, T),
    Shift(Node, T),
    AddBias(Node, Node),
    ColSum(Node),
    BroadcastRows(Node),
    RowSum(Node),
    BroadcastCols(Node),
    Relu(Node),
    /// `upstream ⊙ [x > 0]`; the adjoint of relu.
    ReluGrad {
        x: Node,
        upstream: Node,
    },
    Tanh(Node),
    Step(Node),
    Softmax(Node),
    SoftmaxCrossEntropy {
        logits: Node,
        targets: Node,
    },
    Mse {
        pred: Node,
        target: Node,
    },
    Sum(Node),
    Mean(Node),
    Expand(Node),
}

impl<T> Op<T> {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Const(_) => "constant",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Reshape(_) => "reshape",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Shift(..) => "shift",
            Op::AddBias(..) => "add_bias",
            Op::ColSum(_) => "col_sum",
            Op::BroadcastRows(_) => "broadcast_rows",
            Op::RowSum(_) => "row_sum",
            Op::BroadcastCols(_) => "broadcast_cols",
            Op::Relu(_) => "relu",
            Op::ReluGrad { .. } => "relu_grad",
            Op::Tanh(_) => "tanh",
            Op::Step(_) => "step",
            Op::Softmax(_) => "softmax",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::Mse { .. } => "mse",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Expand(_) => "expand",
        }
    }

    pub(crate) fn operands(&self) -> Vec<Node> {
        match *self {
            Op::Input(_) | Op::Const(_) => Vec::new(),
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddBias(a, b)
            | Op::ReluGrad { x: a, upstream: b }
            | Op::SoftmaxCrossEntropy { logits: a, targets: b }
            | Op::Mse { pred: a, target: b } => vec![a, b],
            Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Scale(a, _)
            | Op::Shift(a, _)
            | Op::ColSum(a)
            | Op::BroadcastRows(a)
            | Op::RowSum(a)
            | Op::BroadcastCols(a)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::Step(a)
            | Op::Softmax(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Expand(a) => vec![a],
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Entry<T> {
    pub(crate) op: Op<T>,
    pub(crate) shape: Vec<usize>,
}

/// An acyclic, topologically ordered computation over tensors.
///
/// Operands always precede the node that uses them, so a single forward
/// sweep evaluates every op once and a single reverse sweep differentiates.
#[derive(Clone, Debug, Default)]
pub struct Record<T> {
    pub(crate) entries: Vec<Entry<T>>,
    input_shapes: Vec<Vec<usize>>,
}

fn mismatch(op: &'static str, detail: alloc::string::String) -> Error {
    Error::ShapeMismatch { op, detail }
}

impl<T: Scalar> Record<T> {
    pub fn new() -> Self {
        Record { entries: Vec::new(), input_shapes: Vec::new() }
    }

    /// Number of nodes, including those appended by differentiation.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn input_shapes(&self) -> &[Vec<usize>] {
        &self.input_shapes
    }

    pub fn shape(&self, node: Node) -> Result<&[usize]> {
        self.entries.get(node.0).map(|e| e.shape.as_slice()).ok_or(Error::UnknownNode(node.0))
    }

    /// Name of the primitive behind `node`.
    pub fn op_name(&self, node: Node) -> Result<&'static str> {
        self.entries.get(node.0).map(|e| e.op.name()).ok_or(Error::UnknownNode(node.0))
    }

    fn push(&mut self, op: Op<T>, shape: Vec<usize>) -> Node {
        self.entries.push(Entry { op, shape });
        Node(self.entries.len() - 1)
    }

    fn shape_of(&self, node: Node) -> Result<Vec<usize>> {
        self.shape(node).map(|s| s.to_vec())
    }

    fn same_shape(&self, op: &'static str, a: Node, b: Node) -> Result<Vec<usize>> {
        let sa = self.shape_of(a)?;
        let sb = self.shape_of(b)?;
        if sa != sb {
            return Err(mismatch(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    fn matrix_shape(&self, op: &'static str, a: Node) -> Result<(usize, usize)> {
        let s = self.shape_of(a)?;
        match s.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(mismatch(op, format!("expected a matrix, got {s:?}"))),
        }
    }

    /// Declares the next input slot. Inputs are bound positionally at
    /// evaluation time.
    pub fn input(&mut self, shape: &[usize]) -> Result<Node> {
        check_shape(shape, "input")?;
        let slot = self.input_shapes.len();
        self.input_shapes.push(shape.to_vec());
        Ok(self.push(Op::Input(slot), shape.to_vec()))
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Node {
        let shape = value.shape().to_vec();
        self.push(Op::Const(value), shape)
    }

    /// Matrix product. A rank-1 right operand is treated as a column vector
    /// and the result is rank 1.
    pub fn matmul(&mut self, a: Node, b: Node) -> Result<Node> {
        let (m, k) = self.matrix_shape("matmul", a)?;
        let sb = self.shape_of(b)?;
        match sb.as_slice() {
            [k2] => {
                if *k2 != k {
                    return Err(mismatch("matmul", format!("[{m}, {k}] x {sb:?}")));
                }
                let col = self.reshape(b, &[k, 1])?;
                let prod = self.push(Op::MatMul(a, col), vec![m, 1]);
                self.reshape(prod, &[m])
            }
            [k2, n] => {
                if *k2 != k {
                    return Err(mismatch("matmul", format!("[{m}, {k}] x {sb:?}")));
                }
                Ok(self.push(Op::MatMul(a, b), vec![m, *n]))
            }
            _ => Err(mismatch("matmul", format!("right operand {sb:?}"))),
        }
    }

    pub fn transpose(&mut self, a: Node) -> Result<Node> {
        let (r, c) = self.matrix_shape("transpose", a)?;
        Ok(self.push(Op::Transpose(a), vec![c, r]))
    }

    pub fn reshape(&mut self, a: Node, shape: &[usize]) -> Result<Node> {
        check_shape(shape, "reshape")?;
        let sa = self.shape_of(a)?;
        if shape_len(&sa) != shape_len(shape) {
            return Err(mismatch("reshape", format!("{sa:?} -> {shape:?}")));
        }
        Ok(self.push(Op::Reshape(a), shape.to_vec()))
    }

    pub fn add(&mut self, a: Node, b: Node) -> Result<Node> {
        let s = self.same_shape("add", a, b)?;
        Ok(self.push(Op::Add(a, b), s))
    }

    pub fn sub(&mut self, a: Node, b: Node) -> Result<Node> {
        let s = self.same_shape("sub", a, b)?;
        Ok(self.push(Op::Sub(a, b), s))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Node, b: Node) -> Result<Node> {
        let s = self.same_shape("mul", a, b)?;
        Ok(self.push(Op::Mul(a, b), s))
    }

    pub fn scale(&mut self, a: Node, factor: f64) -> Result<Node> {
        let s = self.shape_of(a)?;
        Ok(self.push(Op::Scale(a, T::from_f64(factor)), s))
    }

    /// Adds a constant to every element.
    pub fn shift(&mut self, a: Node, offset: f64) -> Result<Node> {
        let s = self.shape_of(a)?;
        Ok(self.push(Op::Shift(a, T::from_f64(offset)), s))
    }

    /// `a[i, j] + bias[j]` for an `[n, k]` matrix and a `[k]` vector.
    pub fn add_bias(&mut self, a: Node, bias: Node) -> Result<Node> {
        let (n, k) = self.matrix_shape("add_bias", a)?;
        let sb = self.shape_of(bias)?;
        if sb != [k] {
            return Err(mismatch("add_bias", format!("[{n}, {k}] + {sb:?}")));
        }
        Ok(self.push(Op::AddBias(a, bias), vec![n, k]))
    }

    /// Column sums of an `[n, k]` matrix, giving `[k]`.
    pub fn col_sum(&mut self, a: Node) -> Result<Node> {
        let (_, k) = self.matrix_shape("col_sum", a)?;
        Ok(self.push(Op::ColSum(a), vec![k]))
    }

    /// Repeats a `[k]` vector as `rows` rows.
    pub fn broadcast_rows(&mut self, a: Node, rows: usize) -> Result<Node> {
        let s = self.shape_of(a)?;
        match s.as_slice() {
            [k] if rows > 0 => Ok(self.push(Op::BroadcastRows(a), vec![rows, *k])),
            _ => Err(mismatch("broadcast_rows", format!("{s:?} to {rows} rows"))),
        }
    }

    /// Row sums of an `[n, k]` matrix, giving `[n]`.
    pub fn row_sum(&mut self, a: Node) -> Result<Node> {
        let (n, _) = self.matrix_shape("row_sum", a)?;
        Ok(self.push(Op::RowSum(a), vec![n]))
    }

    /// Repeats an `[n]` vector as `cols` columns.
    pub fn broadcast_cols(&mut self, a: Node, cols: usize) -> Result<Node> {
        let s = self.shape_of(a)?;
        match s.as_slice() {
            [n] if cols > 0 => Ok(self.push(Op::BroadcastCols(a), vec![*n, cols])),
            _ => Err(mismatch("broadcast_cols", format!("{s:?} to {cols} cols"))),
        }
    }

    pub fn relu(&mut self, a: Node) -> Result<Node> {
        let s = self.shape_of(a)?;
        Ok(self.push(Op::Relu(a), s))
    }

    pub(crate) fn relu_grad(&mut self, x: Node, upstream: Node) -> Result<Node> {
        let s = self.same_shape("relu_grad", x, upstream)?;
        Ok(self.push(Op::ReluGrad { x, upstream }, s))
    }

    pub fn tanh(&mut self, a: Node) -> Result<Node> {
        let s = self.shape_of(a)?;
        Ok(self.push(Op::Tanh(a), s))
    }

    /// Heaviside step `[a > 0]`. Its derivative is zero wherever it exists;
    /// records containing it can be differentiated once but are rejected by
    /// [`Record::hessian_vector_product`].
    pub fn step(&mut self, a: Node) -> Result<Node> {
        let s = self.shape_of(a)?;
        Ok(self.push(Op::Step(a), s))
    }

    /// Row-wise softmax of an `[n, k]` matrix.
    pub fn softmax(&mut self, a: Node) -> Result<Node> {
        let (n, k) = self.matrix_shape("softmax", a)?;
        Ok(self.push(Op::Softmax(a), vec![n, k]))
    }

    /// Mean over rows of `-Σ_k targets · log softmax(logits)`.
    ///
    /// Targets are treated as data: asking for a gradient that flows through
    /// them is an error.
    pub fn softmax_cross_entropy(&mut self, logits: Node, targets: Node) -> Result<Node> {
        self.matrix_shape("softmax_cross_entropy", logits)?;
        self.same_shape("softmax_cross_entropy", logits, targets)?;
        Ok(self.push(Op::SoftmaxCrossEntropy { logits, targets }, Vec::new()))
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, pred: Node, target: Node) -> Result<Node> {
        self.same_shape("mse", pred, target)?;
        Ok(self.push(Op::Mse { pred, target }, Vec::new()))
    }

    pub fn sum(&mut self, a: Node) -> Result<Node> {
        self.shape_of(a)?;
        Ok(self.push(Op::Sum(a), Vec::new()))
    }

    pub fn mean(&mut self, a: Node) -> Result<Node> {
        self.shape_of(a)?;
        Ok(self.push(Op::Mean(a), Vec::new()))
    }

    /// Broadcasts a scalar to `shape`.
    pub fn expand(&mut self, a: Node, shape: &[usize]) -> Result<Node> {
        check_shape(shape, "expand")?;
        let s = self.shape_of(a)?;
        if !s.is_empty() {
            return Err(mismatch("expand", format!("expected a scalar, got {s:?}")));
        }
        Ok(self.push(Op::Expand(a), shape.to_vec()))
    }

    /// Evaluates `outputs` given one tensor per declared input.
    ///
    /// Only ancestors of `outputs` are computed. Any non-finite intermediate
    /// aborts evaluation with an error naming the op that produced it.
    pub fn eval(&self, inputs: &[Tensor<T>], outputs: &[Node]) -> Result<Vec<Tensor<T>>> {
        self.eval_traced(inputs, outputs).map(|(values, _)| values)
    }

    /// Like [`Record::eval`], also returning how many ops were executed.
    pub fn eval_traced(&self, inputs: &[Tensor<T>], outputs: &[Node]) -> Result<(Vec<Tensor<T>>, usize)> {
        eval::evaluate(self, inputs, outputs)
    }
}
