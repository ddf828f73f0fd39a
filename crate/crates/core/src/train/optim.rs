//! First-order optimizers with per-position state.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    /// `buf ← μ·buf + g; w ← w − lr·buf`.
    SgdMomentum {
        momentum: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Optimizer {
    pub const fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub const fn sgd_momentum() -> Self {
        Optimizer::SgdMomentum { momentum: 0.9 }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Buffers<T> {
    first: Vec<T>,
    second: Vec<T>,
}

impl<T: Scalar> Buffers<T> {
    fn new(len: usize) -> Self {
        Buffers { first: vec![T::zero(); len], second: vec![T::zero(); len] }
    }
}

/// Optimizer state for every weight and bias of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub optimizer: Optimizer,
    steps: u64,
    weights: Vec<Buffers<T>>,
    biases: Vec<Option<Buffers<T>>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(optimizer: Optimizer, network: &Network<T>) -> Self {
        OptimizerState {
            optimizer,
            steps: 0,
            weights: network.layers().iter().map(|l| Buffers::new(l.weight.len())).collect(),
            biases: network.layers().iter().map(|l| l.bias.as_ref().map(|b| Buffers::new(b.len()))).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// True when the buffers line up with `network`'s parameters.
    pub fn fits(&self, network: &Network<T>) -> bool {
        self.weights.len() == network.layers().len()
            && network.layers().iter().zip(&self.weights).zip(&self.biases).all(|((l, w), b)| {
                w.first.len() == l.weight.len() && b.as_ref().map(|b| b.first.len()) == l.bias.as_ref().map(|b| b.len())
            })
    }

    /// First-moment (momentum) buffer of a layer's weights.
    pub fn weight_momentum(&self, layer: usize) -> &[T] {
        &self.weights[layer].first
    }

    /// Clears the state at the given weight positions of one layer.
    pub fn reset_weight_positions(&mut self, layer: usize, positions: &[usize]) {
        let b = &mut self.weights[layer];
        for &p in positions {
            b.first[p] = T::zero();
            b.second[p] = T::zero();
        }
    }

    fn update(&self, buf: &mut Buffers<T>, param: &mut [T], grad: &[T], lr: f64, skip: Option<&[bool]>) {
        let lr = T::from_f64(lr);
        match self.optimizer {
            Optimizer::SgdMomentum { momentum } => {
                let mu = T::from_f64(momentum);
                for i in 0..param.len() {
                    if skip.is_some_and(|s| !s[i]) {
                        continue;
                    }
                    buf.first[i] = mu * buf.first[i] + grad[i];
                    param[i] = param[i] - lr * buf.first[i];
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = T::from_f64(1.0 - beta1.powi(t));
                let c2 = T::from_f64(1.0 - beta2.powi(t));
                let (b1, b2, eps) = (T::from_f64(beta1), T::from_f64(beta2), T::from_f64(eps));
                let one = T::one();
                for i in 0..param.len() {
                    if skip.is_some_and(|s| !s[i]) {
                        continue;
                    }
                    let g = grad[i];
                    buf.first[i] = b1 * buf.first[i] + (one - b1) * g;
                    buf.second[i] = b2 * buf.second[i] + (one - b2) * g * g;
                    let m = buf.first[i] / c1;
                    let v = buf.second[i] / c2;
                    param[i] = param[i] - lr * m / (v.sqrt() + eps);
                }
            }
        }
    }

    /// One update. Positions whose mask entry is zero are skipped entirely
    /// when `frozen` is set: neither the weight nor its state moves.
    pub fn step(
        &mut self,
        network: &mut Network<T>,
        weight_grads: &[Tensor<T>],
        bias_grads: &[Option<Tensor<T>>],
        lr: f64,
        frozen: bool,
    ) -> Result<()> {
        if !self.fits(network) || weight_grads.len() != self.weights.len() || bias_grads.len() != self.biases.len() {
            return Err(Error::Precondition("optimizer state does not match the network".into()));
        }
        self.steps += 1;
        let mut weights = core::mem::take(&mut self.weights);
        let mut biases = core::mem::take(&mut self.biases);
        for (l, ((wb, bb), (gw, gb))) in
            weights.iter_mut().zip(biases.iter_mut()).zip(weight_grads.iter().zip(bias_grads)).enumerate()
        {
            let mask: Vec<bool> = network.layer(l).mask.bits().to_vec();
            let skip = frozen.then_some(mask.as_slice());
            self.update(wb, network.weight_mut(l).data_mut(), gw.data(), lr, skip);
            if let (Some(bb), Some(gb), Some(b)) = (bb.as_mut(), gb.as_ref(), network.bias_mut(l)) {
                self.update(bb, b.data_mut(), gb.data(), lr, None);
            }
        }
        self.weights = weights;
        self.biases = biases;
        Ok(())
    }
}
