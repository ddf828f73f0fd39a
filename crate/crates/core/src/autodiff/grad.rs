use alloc::vec;
use alloc::vec::Vec;

use super::{Node, Op, Record};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{shape_len, Tensor};

/// Gradient nodes appended to a record by [`Record::grad`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gradients {
    /// One node per requested parameter, congruent with it.
    pub nodes: Vec<Node>,
    /// Positions (into the requested list) of parameters the loss does not
    /// depend on. Their gradient nodes are zero constants.
    pub unreachable: Vec<usize>,
    /// Number of ops whose adjoint rule ran during the reverse sweep.
    pub ops_visited: usize,
}

impl<T: Scalar> Record<T> {
    /// Nodes in `0..=upto` whose value depends on any node in `wrt`.
    fn dependents(&self, upto: usize, wrt: &[Node]) -> Vec<bool> {
        let mut dep = vec![false; upto + 1];
        for w in wrt {
            if w.0 <= upto {
                dep[w.0] = true;
            }
        }
        for i in 0..=upto {
            if !dep[i] && self.entries[i].op.operands().iter().any(|o| dep[o.0]) {
                dep[i] = true;
            }
        }
        dep
    }

    fn ancestors(&self, of: Node) -> Vec<bool> {
        let mut anc = vec![false; of.0 + 1];
        anc[of.0] = true;
        for i in (0..=of.0).rev() {
            if anc[i] {
                for o in self.entries[i].op.operands() {
                    anc[o.0] = true;
                }
            }
        }
        anc
    }

    fn accumulate(&mut self, adj: &mut [Option<Node>], target: Node, contribution: Node) -> Result<()> {
        adj[target.0] = Some(match adj[target.0] {
            Some(prev) => self.add(prev, contribution)?,
            None => contribution,
        });
        Ok(())
    }

    /// Appends nodes computing `∂loss/∂p` for every `p` in `wrt`.
    ///
    /// `loss` must be a scalar. `wrt` may name inputs or intermediate nodes.
    /// Parameters the loss does not reach get a zero gradient and are listed
    /// in [`Gradients::unreachable`].
    pub fn grad(&mut self, loss: Node, wrt: &[Node]) -> Result<Gradients> {
        let n = self.entries.len();
        if loss.0 >= n {
            return Err(Error::UnknownNode(loss.0));
        }
        for w in wrt {
            if w.0 >= n {
                return Err(Error::UnknownNode(w.0));
            }
        }
        if !self.entries[loss.0].shape.is_empty() {
            return Err(Error::NonScalarLoss(self.entries[loss.0].shape.clone()));
        }

        let dep = self.dependents(loss.0, wrt);
        let mut adj: Vec<Option<Node>> = vec![None; loss.0 + 1];
        let mut visited = 0;
        if dep[loss.0] {
            adj[loss.0] = Some(self.constant(Tensor::scalar(T::one())));
        }

        for i in (0..=loss.0).rev() {
            let Some(u) = adj[i] else { continue };
            if !dep[i] {
                continue;
            }
            visited += 1;
            let this = Node(i);
            let op = self.entries[i].op.clone();
            match op {
                Op::Input(_) | Op::Const(_) => {}
                Op::MatMul(a, b) => {
                    if dep[a.0] {
                        let bt = self.transpose(b)?;
                        let g = self.matmul(u, bt)?;
                        self.accumulate(&mut adj, a, g)?;
                    }
                    if dep[b.0] {
                        let at = self.transpose(a)?;
                        let g = self.matmul(at, u)?;
                        self.accumulate(&mut adj, b, g)?;
                    }
                }
                Op::Transpose(a) => {
                    let g = self.transpose(u)?;
                    self.accumulate(&mut adj, a, g)?;
                }
                Op::Reshape(a) => {
                    let shape = self.entries[a.0].shape.clone();
                    let g = self.reshape(u, &shape)?;
                    self.accumulate(&mut adj, a, g)?;
                }
                Op::Add(a, b) => {
                    if dep[a.0] {
                        self.accumulate(&mut adj, a, u)?;
                    }
                    if dep[b.0] {
                        self.accumulate(&mut adj, b, u)?;
                    }
                }
                Op::Sub(a, b) => {
                    if dep[a.0] {
                        self.accumulate(&mut adj, a, u)?;
                    }
                    if dep[b.0] {
                        let g = self.scale(u, -1.0)?;
                        self.accumulate(&mut adj, b, g)?;
                    }
                }
                Op::Mul(a, b) => {
                    if dep[a.0] {
                        let g = self.mul(u, b)?;
                        self.accumulate(&mut adj, a, g)?;
                    }
                    if dep[b.0] {
                        let g = self.mul(u, a)?;
                        self.accumulate(&mut adj, b, g)?;
                    }
                }
                Op::Scale(a, c) => {
                    let g = self.scale(u, c.as_f64())?;
                    self.accumulate(&mut adj, a, g)?;
                }
                Op::Shift(a, _) => self.accumulate(&mut adj, a, u)?,
                Op::AddBias(a, b) => {
                    if dep[a.0] {
                        self.accumulate(&mut adj, a, u)?;
                    }
                    if dep[b.0] {
                        let g = self.col_sum(u)?;
                        self.accumulate(&mut adj, b, g)?;
                    }
                }
                Op::ColSum(a) => {
                    let rows = self.entries[a.0].shape[0];
                    let g = self.broadcast_rows(u, rows)?;
                    self.accumulate(&mut adj, a, g)?;
                }
                Op::BroadcastRows(a) => {
                    let g = self.col_sum(u)?;
                    self.accumulate(&mut adj, a, g)?;
                }
                Op::RowSum(a) => {
                    let cols = self.entries[a.0].shape[1];
                    let g = self.broadcast_cols(u, cols)?;
                    self.accumulate(&mut adj, a, g)?;
                }
                Op::BroadcastCols(a) => {
                    let g = self.row_sum(u)?;
                    self.accumulate(&mut adj, a, g)?;
                }
                Op::Relu(a) => {
                    let g = self.relu_grad(a, u)?;
                    self.accumulate(&mut adj, a, g)?;
                }
                // d/dx is zero almost everywhere; only the upstream path carries.
                Op::ReluGrad { x, upstream } => {
                    if dep[upstream.0] {
                        let g = self.relu_grad(x, u)?;
                        self.accumulate(&mut adj, upstream, g)?;
                    }
                }
                Op::Tanh(a) => {
                    let sq = self.mul(this, this)?;
                    let neg = self.scale(sq, -1.0)?;
                    let deriv = self.shift(neg, 1.0)?;
                    let g = self.mul(u, deriv)?;
                    self.accumulate(&mut adj, a, g)?;
                }
                Op::Step(_) => {}
                Op::Softmax(a) => {
                    let cols = self.entries[a.0].shape[1];
                    let us = self.mul(u, this)?;
                    let rs = self.row_sum(us)?;
                    let bc = self.broadcast_cols(rs, cols)?;
                    let centered = self.sub(u, bc)?;
                    let g = self.mul(this, centered)?;
                    self.accumulate(&mut adj, a, g)?;
                }
                Op::SoftmaxCrossEntropy { logits, targets } => {
                    if dep[targets.0] {
                        return Err(Error::NotDifferentiable { op: "softmax_cross_entropy", operand: "targets" });
                    }
                    // d/dz_k = (s_k Σ_j y_j - y_k) / rows
                    let shape = self.entries[logits.0].shape.clone();
                    let (rows, cols) = (shape[0], shape[1]);
                    let s = self.softmax(logits)?;
                    let ysum = self.row_sum(targets)?;
                    let ysum = self.broadcast_cols(ysum, cols)?;
                    let sy = self.mul(s, ysum)?;
                    let diff = self.sub(sy, targets)?;
                    let scaled = self.scale(diff, 1.0 / rows as f64)?;
                    let ue = self.expand(u, &shape)?;
                    let g = self.mul(ue, scaled)?;
                    self.accumulate(&mut adj, logits, g)?;
                }
                Op::Mse { pred, target } => {
                    let shape = self.entries[pred.0].shape.clone();
                    let count = shape_len(&shape) as f64;
                    let diff = self.sub(pred, target)?;
                    let scaled = self.scale(diff, 2.0 / count)?;
                    let ue = self.expand(u, &shape)?;
                    let g = self.mul(ue, scaled)?;
                    if dep[pred.0] {
                        self.accumulate(&mut adj, pred, g)?;
                    }
                    if dep[target.0] {
                        let neg = self.scale(g, -1.0)?;
                        self.accumulate(&mut adj, target, neg)?;
                    }
                }
                Op::Sum(a) => {
                    let shape = self.entries[a.0].shape.clone();
                    let g = self.expand(u, &shape)?;
                    self.accumulate(&mut adj, a, g)?;
                }
                Op::Mean(a) => {
                    let shape = self.entries[a.0].shape.clone();
                    let e = self.expand(u, &shape)?;
                    let g = self.scale(e, 1.0 / shape_len(&shape) as f64)?;
                    self.accumulate(&mut adj, a, g)?;
                }
                Op::Expand(a) => {
                    let g = self.sum(u)?;
                    self.accumulate(&mut adj, a, g)?;
                }
            }
        }

        let mut nodes = Vec::with_capacity(wrt.len());
        let mut unreachable = Vec::new();
        for (pos, w) in wrt.iter().enumerate() {
            match adj.get(w.0).copied().flatten() {
                Some(g) => nodes.push(g),
                None => {
                    unreachable.push(pos);
                    let shape = self.entries[w.0].shape.clone();
                    nodes.push(self.constant(Tensor::zeros(&shape)));
                }
            }
        }
        Ok(Gradients { nodes, unreachable, ops_visited: visited })
    }

    /// Appends nodes computing `H v` where `H` is the Hessian of `loss` with
    /// respect to `wrt`, by differentiating `Σ_i ⟨∂loss/∂wrt_i, v_i⟩` once more
    /// with `v` held constant.
    ///
    /// Relu is accepted: its second derivative is zero wherever it exists.
    /// An explicit [`Record::step`] between the loss and a parameter is
    /// rejected with [`Error::NotTwiceDifferentiable`].
    pub fn hessian_vector_product(&mut self, loss: Node, wrt: &[Node], v: &[Node]) -> Result<Vec<Node>> {
        if wrt.len() != v.len() {
            return Err(Error::InvalidArgument(alloc::format!(
                "{} parameters but {} direction tensors",
                wrt.len(),
                v.len()
            )));
        }
        for (w, d) in wrt.iter().zip(v) {
            let (sw, sd) = (self.shape(*w)?.to_vec(), self.shape(*d)?.to_vec());
            if sw != sd {
                return Err(Error::ShapeMismatch {
                    op: "hessian_vector_product",
                    detail: alloc::format!("parameter {sw:?} vs direction {sd:?}"),
                });
            }
        }
        if loss.0 >= self.entries.len() {
            return Err(Error::UnknownNode(loss.0));
        }
        let anc = self.ancestors(loss);
        let dep = self.dependents(loss.0, wrt);
        for i in 0..=loss.0 {
            if anc[i] && dep[i] {
                if let Op::Step(_) = self.entries[i].op {
                    return Err(Error::NotTwiceDifferentiable { op: "step" });
                }
            }
        }

        let g = self.grad(loss, wrt)?;
        let mut dot: Option<Node> = None;
        for (pos, (&gi, &vi)) in g.nodes.iter().zip(v).enumerate() {
            if g.unreachable.contains(&pos) {
                continue;
            }
            let prod = self.mul(gi, vi)?;
            let s = self.sum(prod)?;
            dot = Some(match dot {
                Some(acc) => self.add(acc, s)?,
                None => s,
            });
        }
        match dot {
            Some(dot) => Ok(self.grad(dot, wrt)?.nodes),
            None => Ok(wrt
                .iter()
                .map(|w| {
                    let shape = self.entries[w.0].shape.clone();
                    self.constant(Tensor::zeros(&shape))
                })
                .collect()),
        }
    }
}
