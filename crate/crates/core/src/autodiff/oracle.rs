//! Central finite differences, used to check the symbolic derivatives.
//!
//! These routines only exist for `f64` records; they never feed production
//! code paths.

use alloc::vec::Vec;

use super::{Node, Record};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Central-difference estimate of `∂loss/∂inputs[slot]` for each slot in
/// `slots`, perturbing one element at a time by `±step`.
pub fn finite_difference(
    record: &Record<f64>,
    loss: Node,
    inputs: &[Tensor<f64>],
    slots: &[usize],
    step: f64,
) -> Result<Vec<Tensor<f64>>> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("step must be positive, got {step}")));
    }
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut out = Vec::with_capacity(slots.len());
    for &slot in slots {
        if slot >= work.len() {
            return Err(Error::InputCount { expected: slot + 1, found: work.len() });
        }
        let mut est = Tensor::zeros(work[slot].shape());
        for j in 0..work[slot].len() {
            let orig = work[slot].data()[j];
            work[slot].data_mut()[j] = orig + step;
            let plus = record.eval(&work, &[loss])?[0].item();
            work[slot].data_mut()[j] = orig - step;
            let minus = record.eval(&work, &[loss])?[0].item();
            work[slot].data_mut()[j] = orig;
            est.data_mut()[j] = (plus - minus) / (2.0 * step);
        }
        out.push(est);
    }
    Ok(out)
}

/// Central difference of a gradient along direction `v`:
/// `(g(w + εv) - g(w - εv)) / 2ε`, an estimate of `Hv`.
///
/// `grads` are gradient nodes already present in `record`, one per slot.
pub fn finite_difference_hvp(
    record: &Record<f64>,
    grads: &[Node],
    inputs: &[Tensor<f64>],
    slots: &[usize],
    direction: &[Tensor<f64>],
    step: f64,
) -> Result<Vec<Tensor<f64>>> {
    if slots.len() != direction.len() || slots.len() != grads.len() {
        return Err(Error::InvalidArgument("slots, gradients and directions differ in length".into()));
    }
    let shifted = |sign: f64| -> Result<Vec<Tensor<f64>>> {
        let mut work = inputs.to_vec();
        for (&slot, d) in slots.iter().zip(direction) {
            work[slot] = work[slot].zip_map(d, |w, v| w + sign * step * v)?;
        }
        record.eval(&work, grads)
    };
    let plus = shifted(1.0)?;
    let minus = shifted(-1.0)?;
    plus.iter().zip(&minus).map(|(p, m)| p.zip_map(m, |a, b| (a - b) / (2.0 * step))).collect()
}
