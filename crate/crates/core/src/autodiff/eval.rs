use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Entry, Node, Op, Record};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub(super) fn evaluate<T: Scalar>(
    record: &Record<T>,
    inputs: &[Tensor<T>],
    outputs: &[Node],
) -> Result<(Vec<Tensor<T>>, usize)> {
    let shapes = record.input_shapes();
    if inputs.len() != shapes.len() {
        return Err(Error::InputCount { expected: shapes.len(), found: inputs.len() });
    }
    for (slot, (t, s)) in inputs.iter().zip(shapes).enumerate() {
        if t.shape() != s.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "input",
                detail: format!("slot {slot} declared {s:?}, bound {:?}", t.shape()),
            });
        }
        if !t.all_finite() {
            return Err(Error::NonFinite { op: "input" });
        }
    }

    let n = record.entries.len();
    let mut needed = vec![false; n];
    for o in outputs {
        if o.0 >= n {
            return Err(Error::UnknownNode(o.0));
        }
        needed[o.0] = true;
    }
    for i in (0..n).rev() {
        if needed[i] {
            for operand in record.entries[i].op.operands() {
                needed[operand.0] = true;
            }
        }
    }

    let mut values: Vec<Option<Tensor<T>>> = vec![None; n];
    let mut executed = 0;
    for i in 0..n {
        if !needed[i] {
            continue;
        }
        let entry = &record.entries[i];
        let value = compute(entry, &values, inputs)?;
        if !value.all_finite() {
            return Err(Error::NonFinite { op: entry.op.name() });
        }
        debug_assert_eq!(value.shape(), entry.shape.as_slice());
        values[i] = Some(value);
        executed += 1;
    }
    let out = outputs.iter().map(|o| values[o.0].clone().expect("output was evaluated")).collect();
    Ok((out, executed))
}

fn get<T>(values: &[Option<Tensor<T>>], node: Node) -> &Tensor<T> {
    values[node.0].as_ref().expect("operand evaluated before use")
}

fn with_shape<T: Scalar>(shape: &[usize], data: Vec<T>) -> Tensor<T> {
    Tensor::new(shape.to_vec(), data).expect("shape checked at construction")
}

fn compute<T: Scalar>(entry: &Entry<T>, values: &[Option<Tensor<T>>], inputs: &[Tensor<T>]) -> Result<Tensor<T>> {
    let shape = &entry.shape;
    let v = |n: Node| get(values, n);
    let out = match &entry.op {
        Op::Input(slot) => inputs[*slot].clone(),
        Op::Const(t) => t.clone(),
        Op::MatMul(a, b) => matmul(v(*a), v(*b)),
        Op::Transpose(a) => {
            let a = v(*a);
            let (r, c) = (a.rows(), a.cols());
            let src = a.data();
            let mut data = vec![T::zero(); r * c];
            for i in 0..r {
                for j in 0..c {
                    data[j * r + i] = src[i * c + j];
                }
            }
            with_shape(shape, data)
        }
        Op::Reshape(a) => with_shape(shape, v(*a).data().to_vec()),
        Op::Add(a, b) => v(*a).zip_map(v(*b), |x, y| x + y)?,
        Op::Sub(a, b) => v(*a).zip_map(v(*b), |x, y| x - y)?,
        Op::Mul(a, b) => v(*a).zip_map(v(*b), |x, y| x * y)?,
        Op::Scale(a, c) => {
            let c = *c;
            v(*a).map(|x| x * c)
        }
        Op::Shift(a, c) => {
            let c = *c;
            v(*a).map(|x| x + c)
        }
        Op::AddBias(a, b) => {
            let a = v(*a);
            let b = v(*b).data();
            let k = b.len();
            let data = a.data().iter().enumerate().map(|(i, &x)| x + b[i % k]).collect();
            with_shape(shape, data)
        }
        Op::ColSum(a) => {
            let a = v(*a);
            let k = a.cols();
            let mut data = vec![T::zero(); k];
            for row in a.data().chunks(k) {
                for (acc, &x) in data.iter_mut().zip(row) {
                    *acc = *acc + x;
                }
            }
            with_shape(shape, data)
        }
        Op::BroadcastRows(a) => {
            let a = v(*a).data();
            let rows = shape[0];
            let mut data = Vec::with_capacity(rows * a.len());
            for _ in 0..rows {
                data.extend_from_slice(a);
            }
            with_shape(shape, data)
        }
        Op::RowSum(a) => {
            let a = v(*a);
            let data = a.data().chunks(a.cols()).map(|r| r.iter().copied().sum()).collect();
            with_shape(shape, data)
        }
        Op::BroadcastCols(a) => {
            let a = v(*a).data();
            let cols = shape[1];
            let mut data = Vec::with_capacity(cols * a.len());
            for &x in a {
                data.extend(core::iter::repeat(x).take(cols));
            }
            with_shape(shape, data)
        }
        Op::Relu(a) => v(*a).map(|x| if x > T::zero() { x } else { T::zero() }),
        Op::ReluGrad { x, upstream } => {
            v(*upstream).zip_map(v(*x), |u, x| if x > T::zero() { u } else { T::zero() })?
        }
        Op::Tanh(a) => v(*a).map(|x| x.tanh()),
        Op::Step(a) => v(*a).map(|x| if x > T::zero() { T::one() } else { T::zero() }),
        Op::Softmax(a) => softmax(v(*a)),
        Op::SoftmaxCrossEntropy { logits, targets } => {
            let z = v(*logits);
            let y = v(*targets);
            let k = z.cols();
            let mut total = T::zero();
            for (zr, yr) in z.data().chunks(k).zip(y.data().chunks(k)) {
                let max = zr.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = zr.iter().map(|&x| (x - max).exp()).sum::<T>().ln() + max;
                for (&zi, &yi) in zr.iter().zip(yr) {
                    total = total + yi * (lse - zi);
                }
            }
            Tensor::scalar(total / T::from_f64(z.rows() as f64))
        }
        Op::Mse { pred, target } => {
            let p = v(*pred);
            let t = v(*target);
            let total: T = p.data().iter().zip(t.data()).map(|(&a, &b)| (a - b) * (a - b)).sum();
            Tensor::scalar(total / T::from_f64(p.len() as f64))
        }
        Op::Sum(a) => Tensor::scalar(v(*a).sum()),
        Op::Mean(a) => {
            let a = v(*a);
            Tensor::scalar(a.sum() / T::from_f64(a.len() as f64))
        }
        Op::Expand(a) => Tensor::full(shape, v(*a).item()),
    };
    Ok(out)
}

fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k) = (a.rows(), a.cols());
    let n = b.cols();
    let ad = a.data();
    let bd = b.data();
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + aip * bv;
            }
        }
    }
    with_shape(&[m, n], out)
}

fn softmax<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let k = a.cols();
    let mut data = Vec::with_capacity(a.len());
    for row in a.data().chunks(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = data.len();
        let mut denom = T::zero();
        for &x in row {
            let e = (x - max).exp();
            denom = denom + e;
            data.push(e);
        }
        for e in &mut data[start..] {
            *e = *e / denom;
        }
    }
    with_shape(a.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::super::Record;
    use crate::tensor::Tensor;
    use crate::Error;
    use alloc::vec;

    #[test]
    fn identity_record_returns_input() {
        let mut rec = Record::<f64>::new();
        let x = rec.input(&[3]).unwrap();
        let out = rec.eval(&[Tensor::vector(vec![1.0, 2.0, 3.0])], &[x]).unwrap();
        assert_eq!(out[0].data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn identity_matrix_product() {
        let mut rec = Record::<f64>::new();
        let w = rec.constant(Tensor::matrix(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap());
        let x = rec.input(&[2]).unwrap();
        let y = rec.matmul(w, x).unwrap();
        let out = rec.eval(&[Tensor::vector(vec![3.0, 4.0])], &[y]).unwrap();
        assert_eq!(out[0].shape(), &[2]);
        assert_eq!(out[0].data(), &[3.0, 4.0]);
    }

    #[test]
    fn mse_of_exact_prediction_is_zero() {
        let mut rec = Record::<f64>::new();
        let p = rec.input(&[2]).unwrap();
        let t = rec.constant(Tensor::vector(vec![1.0, 2.0]));
        let l = rec.mse(p, t).unwrap();
        let out = rec.eval(&[Tensor::vector(vec![1.0, 2.0])], &[l]).unwrap();
        assert_eq!(out[0].item(), 0.0);
    }

    #[test]
    fn shape_mismatch_at_binding() {
        let mut rec = Record::<f64>::new();
        let x = rec.input(&[3]).unwrap();
        let err = rec.eval(&[Tensor::vector(vec![1.0, 2.0])], &[x]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { op: "input", .. }));
        let err = rec.eval(&[], &[x]).unwrap_err();
        assert!(matches!(err, Error::InputCount { expected: 1, found: 0 }));
    }

    #[test]
    fn shape_mismatch_at_construction() {
        let mut rec = Record::<f64>::new();
        let a = rec.input(&[2, 3]).unwrap();
        let b = rec.input(&[2, 3]).unwrap();
        assert!(rec.matmul(a, b).is_err());
        let c = rec.input(&[3]).unwrap();
        assert!(rec.add(a, c).is_err());
    }

    #[test]
    fn non_finite_intermediate_is_reported() {
        let mut rec = Record::<f64>::new();
        let x = rec.input(&[1]).unwrap();
        let big = rec.scale(x, 1e300).unwrap();
        let sq = rec.mul(big, big).unwrap();
        let err = rec.eval(&[Tensor::vector(vec![10.0])], &[sq]).unwrap_err();
        assert_eq!(err, Error::NonFinite { op: "mul" });
        let err = rec.eval(&[Tensor::vector(vec![f64::NAN])], &[x]).unwrap_err();
        assert_eq!(err, Error::NonFinite { op: "input" });
    }

    #[test]
    fn softmax_cross_entropy_matches_hand_value() {
        let mut rec = Record::<f64>::new();
        let z = rec.input(&[1, 2]).unwrap();
        let y = rec.constant(Tensor::matrix(&[&[1.0, 0.0]]).unwrap());
        let l = rec.softmax_cross_entropy(z, y).unwrap();
        let out = rec.eval(&[Tensor::matrix(&[&[0.0, 0.0]]).unwrap()], &[l]).unwrap();
        assert!((out[0].item() - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn only_ancestors_are_evaluated() {
        let mut rec = Record::<f64>::new();
        let x = rec.input(&[2]).unwrap();
        let a = rec.relu(x).unwrap();
        let _unused = rec.tanh(x).unwrap();
        let s = rec.sum(a).unwrap();
        let (_, executed) = rec.eval_traced(&[Tensor::vector(vec![1.0, -1.0])], &[s]).unwrap();
        assert_eq!(executed, 3);
    }
}
