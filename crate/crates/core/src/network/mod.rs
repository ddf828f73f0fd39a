//! Maskable multi-layer perceptrons.
//!
//! Every layer stores a weight matrix of shape `fan_out × fan_in`, an
//! optional bias and a binary mask congruent to the weight. The forward pass
//! always multiplies by `mask ⊙ weight`; raw weights are never read where a
//! mask exists. Layers that are not prunable, or that sit in the exclusion
//! set, keep all-ones masks.

mod svd;
mod trim;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;

use crate::autodiff::{Node, Record};
use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::scalar::Scalar;
use crate::seed;
use crate::tensor::Tensor;

pub use self::svd::{compress_low_rank, low_rank_factorize, singular_values, LowRankFactors};
pub use self::trim::{trim_neurons, ump_trim_quota};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Dense,
    /// Final projection; never trimmed because every output unit is required.
    OutputDense,
    /// Bias-free linear factor produced by low-rank compression.
    Factor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Nonlinearity {
    Relu,
    Tanh,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub fan_in: usize,
    pub fan_out: usize,
    pub nonlinearity: Nonlinearity,
    pub prunable: bool,
    pub trimmable: bool,
}

impl LayerSpec {
    pub fn dense(fan_in: usize, fan_out: usize, nonlinearity: Nonlinearity) -> Self {
        LayerSpec { kind: LayerKind::Dense, fan_in, fan_out, nonlinearity, prunable: true, trimmable: true }
    }

    pub fn output(fan_in: usize, fan_out: usize) -> Self {
        LayerSpec {
            kind: LayerKind::OutputDense,
            fan_in,
            fan_out,
            nonlinearity: Nonlinearity::Identity,
            prunable: true,
            trimmable: false,
        }
    }

    pub fn factor(fan_in: usize, rank: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Factor,
            fan_in,
            fan_out: rank,
            nonlinearity: Nonlinearity::Identity,
            prunable: false,
            trimmable: false,
        }
    }

    pub fn has_bias(&self) -> bool {
        self.kind != LayerKind::Factor
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.fan_in == 0 || self.fan_out == 0 {
            return Err(Error::LayerChain(format!("layer {index} has a zero dimension")));
        }
        match self.kind {
            LayerKind::OutputDense if self.trimmable => {
                Err(Error::LayerChain(format!("output layer {index} cannot be trimmable")))
            }
            LayerKind::Factor if self.trimmable || self.prunable || self.nonlinearity != Nonlinearity::Identity => {
                Err(Error::LayerChain(format!("factor layer {index} must be linear, unprunable and untrimmable")))
            }
            _ => Ok(()),
        }
    }
}

/// Binary mask over a `rows × cols` weight matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn ones(rows: usize, cols: usize) -> Self {
        Mask { rows, cols, bits: vec![true; rows * cols] }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "mask",
                detail: format!("{} bits for a {rows}x{cols} mask", bits.len()),
            });
        }
        Ok(Mask { rows, cols, bits })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn set(&mut self, index: usize, on: bool) {
        self.bits[index] = on;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_all_ones(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    /// True when every position kept here is also kept in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.len() == other.bits.len() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self.bits.iter().map(|&b| if b { T::one() } else { T::zero() }).collect();
        Tensor::new(vec![self.rows, self.cols], data).expect("mask dimensions are positive")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub mask: Mask,
}

impl<T: Scalar> Layer<T> {
    /// `mask ⊙ weight`.
    pub fn effective_weight(&self) -> Tensor<T> {
        let mut w = self.weight.clone();
        for (v, &on) in w.data_mut().iter_mut().zip(self.mask.bits()) {
            if !on {
                *v = T::zero();
            }
        }
        w
    }
}

/// Weights saved at construction, used to rewind foresight-pruned networks.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialParams<T> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    Mse,
    SoftmaxCrossEntropy,
}

/// Parameter accounting.
///
/// `total` and `nonzero` cover every stored parameter including biases;
/// biases are never masked and always count as stored. `sparsity` is the
/// exact fraction of maskable weights whose mask entry is zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    pub nonzero: usize,
    pub maskable: usize,
    pub active: usize,
    pub sparsity: Fraction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
    exclusions: BTreeSet<usize>,
    initial: Option<Vec<InitialParams<T>>>,
}

fn check_chain(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::LayerChain("no layers".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        s.validate(i)?;
    }
    for (i, pair) in specs.windows(2).enumerate() {
        if pair[0].fan_out != pair[1].fan_in {
            return Err(Error::LayerChain(format!(
                "layer {} outputs {} units but layer {} expects {}",
                i,
                pair[0].fan_out,
                i + 1,
                pair[1].fan_in
            )));
        }
    }
    Ok(())
}

/// Program evaluating a network on a fixed number of rows.
///
/// Input slots are, in order: the batch, the target (when a loss is
/// attached), then per layer its weight, its bias (if any) and its mask.
#[derive(Clone, Debug)]
pub struct ForwardProgram<T> {
    pub record: Record<T>,
    pub rows: usize,
    pub input: Node,
    pub target: Option<Node>,
    pub weights: Vec<Node>,
    pub biases: Vec<Option<Node>>,
    pub masks: Vec<Node>,
    pub effective: Vec<Node>,
    pub output: Node,
    pub loss: Option<Node>,
}

impl<T: Scalar> ForwardProgram<T> {
    /// Input tensors for this program in slot order.
    pub fn bind(&self, network: &Network<T>, batch: &Tensor<T>, target: Option<&Tensor<T>>) -> Result<Vec<Tensor<T>>> {
        let mut out = Vec::with_capacity(2 + 3 * network.layers.len());
        out.push(batch.clone());
        match (self.target, target) {
            (Some(_), Some(t)) => out.push(t.clone()),
            (None, None) => {}
            (Some(_), None) => return Err(Error::InvalidArgument("program expects a target".into())),
            (None, Some(_)) => return Err(Error::InvalidArgument("program has no loss to take a target".into())),
        }
        for layer in &network.layers {
            out.push(layer.weight.clone());
            if let Some(b) = &layer.bias {
                out.push(b.clone());
            }
            out.push(layer.mask.to_tensor());
        }
        Ok(out)
    }
}

impl<T: Scalar> Network<T> {
    /// Builds a network with weights drawn from `U(-√(3/fan_in), √(3/fan_in))`
    /// (unit-variance preserving) and zero biases. The initial weights are saved for later rewinding.
    pub fn build(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        check_chain(specs)?;
        let mut rng = seed::rng(seed);
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let bound = (3.0 / spec.fan_in as f64).sqrt();
            let data: Vec<T> =
                (0..spec.fan_in * spec.fan_out).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
            let weight = Tensor::new(vec![spec.fan_out, spec.fan_in], data)?;
            let bias = spec.has_bias().then(|| Tensor::zeros(&[spec.fan_out]));
            layers.push(Layer { spec: *spec, weight, bias, mask: Mask::ones(spec.fan_out, spec.fan_in) });
        }
        let initial = layers.iter().map(|l| InitialParams { weight: l.weight.clone(), bias: l.bias.clone() }).collect();
        Ok(Network { layers, exclusions: BTreeSet::new(), initial: Some(initial) })
    }

    /// Reassembles a network from stored parts, checking every invariant.
    pub fn from_parts(
        layers: Vec<Layer<T>>,
        exclusions: BTreeSet<usize>,
        initial: Option<Vec<InitialParams<T>>>,
    ) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        check_chain(&specs)?;
        for (i, l) in layers.iter().enumerate() {
            let shape = [l.spec.fan_out, l.spec.fan_in];
            if l.weight.shape() != shape || l.mask.rows != shape[0] || l.mask.cols != shape[1] {
                return Err(Error::LayerChain(format!("layer {i} tensors do not match its spec")));
            }
            match (&l.bias, l.spec.has_bias()) {
                (Some(b), true) if b.shape() == [l.spec.fan_out] => {}
                (None, false) => {}
                _ => return Err(Error::LayerChain(format!("layer {i} bias does not match its spec"))),
            }
            if (!l.spec.prunable || exclusions.contains(&i)) && !l.mask.is_all_ones() {
                return Err(Error::LayerChain(format!("layer {i} is not maskable but has a partial mask")));
            }
        }
        if let Some(&bad) = exclusions.iter().find(|&&e| e >= layers.len()) {
            return Err(Error::LayerChain(format!("excluded layer {bad} does not exist")));
        }
        if let Some(init) = &initial {
            let ok = init.len() == layers.len()
                && init.iter().zip(&layers).all(|(p, l)| {
                    p.weight.shape() == l.weight.shape()
                        && p.bias.as_ref().map(|b| b.shape().to_vec()) == l.bias.as_ref().map(|b| b.shape().to_vec())
                });
            if !ok {
                return Err(Error::LayerChain("initial weights do not match the layers".into()));
            }
        }
        Ok(Network { layers, exclusions, initial })
    }

    /// Marks layers as never pruned or trimmed. Their masks are reset to
    /// all ones.
    pub fn with_exclusions(mut self, ids: impl IntoIterator<Item = usize>) -> Result<Self> {
        for id in ids {
            if id >= self.layers.len() {
                return Err(Error::LayerChain(format!("excluded layer {id} does not exist")));
            }
            self.exclusions.insert(id);
            let l = &mut self.layers[id];
            l.mask = Mask::ones(l.spec.fan_out, l.spec.fan_in);
        }
        Ok(self)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> &Layer<T> {
        &self.layers[index]
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn exclusions(&self) -> &BTreeSet<usize> {
        &self.exclusions
    }

    pub fn initial(&self) -> Option<&[InitialParams<T>]> {
        self.initial.as_deref()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.fan_out
    }

    pub fn is_maskable(&self, layer: usize) -> bool {
        self.layers[layer].spec.prunable && !self.exclusions.contains(&layer)
    }

    /// Indices of prunable, non-excluded layers in order.
    pub fn maskable_layers(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.is_maskable(i)).collect()
    }

    /// Masks of the maskable layers, aligned with [`Network::maskable_layers`].
    pub fn masks(&self) -> Vec<Mask> {
        self.maskable_layers().into_iter().map(|i| self.layers[i].mask.clone()).collect()
    }

    /// Installs masks on the maskable layers (aligned with
    /// [`Network::maskable_layers`]) and hard-zeroes masked weights.
    pub fn apply_masks(&mut self, masks: &[Mask]) -> Result<()> {
        let ids = self.maskable_layers();
        if masks.len() != ids.len() {
            return Err(Error::InvalidArgument(format!("{} masks for {} maskable layers", masks.len(), ids.len())));
        }
        for (&i, m) in ids.iter().zip(masks) {
            self.set_mask(i, m.clone())?;
        }
        Ok(())
    }

    /// Replaces one layer's mask and zeroes the weights it removes.
    pub fn set_mask(&mut self, layer: usize, mask: Mask) -> Result<()> {
        if layer >= self.layers.len() {
            return Err(Error::InvalidArgument(format!("layer {layer} does not exist")));
        }
        let maskable = self.is_maskable(layer);
        let l = &mut self.layers[layer];
        if mask.rows != l.spec.fan_out || mask.cols != l.spec.fan_in {
            return Err(Error::ShapeMismatch {
                op: "set_mask",
                detail: format!("{}x{} mask for {}x{} weight", mask.rows, mask.cols, l.spec.fan_out, l.spec.fan_in),
            });
        }
        if !maskable && !mask.is_all_ones() {
            return Err(Error::Precondition(format!("layer {layer} is excluded or not prunable")));
        }
        for (w, &on) in l.weight.data_mut().iter_mut().zip(&mask.bits) {
            if !on {
                *w = T::zero();
            }
        }
        l.mask = mask;
        Ok(())
    }

    /// Zeroes every weight whose mask entry is zero.
    pub fn hard_zero_masked(&mut self) {
        for l in &mut self.layers {
            for (w, &on) in l.weight.data_mut().iter_mut().zip(&l.mask.bits) {
                if !on {
                    *w = T::zero();
                }
            }
        }
    }

    /// Hard-zeroes masked weights, then resets maskable masks to all ones so
    /// that the removed weights can be trained back.
    pub fn lift_masks(&mut self) {
        self.hard_zero_masked();
        for i in self.maskable_layers() {
            let l = &mut self.layers[i];
            l.mask = Mask::ones(l.spec.fan_out, l.spec.fan_in);
        }
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Tensor<T> {
        &mut self.layers[layer].weight
    }

    pub fn bias_mut(&mut self, layer: usize) -> Option<&mut Tensor<T>> {
        self.layers[layer].bias.as_mut()
    }

    /// Restores the weights and biases saved at construction. Masks are
    /// kept and masked weights re-zeroed.
    pub fn reset_to_initial(&mut self) -> Result<()> {
        let init =
            self.initial.as_ref().ok_or_else(|| Error::Precondition("network has no saved initial weights".into()))?;
        for (l, p) in self.layers.iter_mut().zip(init) {
            l.weight = p.weight.clone();
            l.bias = p.bias.clone();
        }
        self.hard_zero_masked();
        Ok(())
    }

    pub fn drop_initial(&mut self) {
        self.initial = None;
    }

    pub fn count_params(&self) -> ParamCount {
        let mut total = 0;
        let mut nonzero = 0;
        let mut maskable = 0;
        let mut active = 0;
        for (i, l) in self.layers.iter().enumerate() {
            let bias = l.bias.as_ref().map_or(0, |b| b.len());
            total += l.weight.len() + bias;
            nonzero += bias;
            nonzero += l.weight.data().iter().zip(&l.mask.bits).filter(|(&w, &on)| on && w != T::zero()).count();
            if self.is_maskable(i) {
                maskable += l.weight.len();
                active += l.mask.count_ones();
            }
        }
        ParamCount {
            total,
            nonzero,
            maskable,
            active,
            sparsity: Fraction::new((maskable - active) as u64, maskable as u64),
        }
    }

    /// Builds the evaluation program for batches of `rows` samples,
    /// optionally attaching a loss.
    pub fn program(&self, rows: usize, loss: Option<LossKind>) -> Result<ForwardProgram<T>> {
        let mut rec = Record::new();
        let input = rec.input(&[rows, self.input_dim()])?;
        let target = match loss {
            Some(_) => Some(rec.input(&[rows, self.output_dim()])?),
            None => None,
        };
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut masks = Vec::new();
        let mut effective = Vec::new();
        let mut h = input;
        for l in &self.layers {
            let w = rec.input(&[l.spec.fan_out, l.spec.fan_in])?;
            let b = match l.bias {
                Some(_) => Some(rec.input(&[l.spec.fan_out])?),
                None => None,
            };
            let m = rec.input(&[l.spec.fan_out, l.spec.fan_in])?;
            let we = rec.mul(w, m)?;
            let wt = rec.transpose(we)?;
            let mut z = rec.matmul(h, wt)?;
            if let Some(b) = b {
                z = rec.add_bias(z, b)?;
            }
            h = match l.spec.nonlinearity {
                Nonlinearity::Relu => rec.relu(z)?,
                Nonlinearity::Tanh => rec.tanh(z)?,
                Nonlinearity::Identity => z,
            };
            weights.push(w);
            biases.push(b);
            masks.push(m);
            effective.push(we);
        }
        let loss_node = match (loss, target) {
            (Some(LossKind::Mse), Some(t)) => Some(rec.mse(h, t)?),
            (Some(LossKind::SoftmaxCrossEntropy), Some(t)) => Some(rec.softmax_cross_entropy(h, t)?),
            _ => None,
        };
        Ok(ForwardProgram {
            record: rec,
            rows,
            input,
            target,
            weights,
            biases,
            masks,
            effective,
            output: h,
            loss: loss_node,
        })
    }

    /// Network output for a `rows × fan_in` batch.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        if batch.rank() != 2 || batch.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "forward",
                detail: format!("batch {:?} for input width {}", batch.shape(), self.input_dim()),
            });
        }
        let prog = self.program(batch.rows(), None)?;
        let inputs = prog.bind(self, batch, None)?;
        Ok(prog.record.eval(&inputs, &[prog.output])?.remove(0))
    }

    /// Mean loss over a batch.
    pub fn loss(&self, batch: &Tensor<T>, target: &Tensor<T>, kind: LossKind) -> Result<T> {
        let prog = self.program(batch.rows(), Some(kind))?;
        let inputs = prog.bind(self, batch, Some(target))?;
        Ok(prog.record.eval(&inputs, &[prog.loss.expect("loss attached")])?[0].item())
    }

    /// Replaces the layer list wholesale; used by structural transforms.
    pub(crate) fn rebuild(
        layers: Vec<Layer<T>>,
        exclusions: BTreeSet<usize>,
        initial: Option<Vec<InitialParams<T>>>,
    ) -> Result<Self> {
        Self::from_parts(layers, exclusions, initial)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mlp() -> Vec<LayerSpec> {
        vec![LayerSpec::dense(2, 3, Nonlinearity::Relu), LayerSpec::output(3, 1)]
    }

    #[test]
    fn build_shapes_and_masks() {
        let net = Network::<f64>::build(&mlp(), 1).unwrap();
        assert_eq!(net.layer(0).weight.shape(), &[3, 2]);
        assert_eq!(net.layer(1).weight.shape(), &[1, 3]);
        assert!(net.layers().iter().all(|l| l.mask.is_all_ones()));
        assert_eq!(net.layer(1).mask.rows(), 1);
        assert!(net.initial().is_some());
    }

    #[test]
    fn build_is_seed_deterministic() {
        let a = Network::<f32>::build(&mlp(), 9).unwrap();
        let b = Network::<f32>::build(&mlp(), 9).unwrap();
        assert_eq!(a, b);
        for s in 0..5u64 {
            let x = Network::<f32>::build(&mlp(), 2 * s).unwrap();
            let y = Network::<f32>::build(&mlp(), 2 * s + 1).unwrap();
            assert_ne!(x.layer(0).weight, y.layer(0).weight);
        }
    }

    #[test]
    fn incompatible_chain_is_rejected() {
        let specs = vec![LayerSpec::dense(2, 3, Nonlinearity::Relu), LayerSpec::output(4, 1)];
        assert!(matches!(Network::<f64>::build(&specs, 0), Err(Error::LayerChain(_))));
        let mut bad = LayerSpec::output(3, 1);
        bad.trimmable = true;
        assert!(Network::<f64>::build(&[LayerSpec::dense(2, 3, Nonlinearity::Relu), bad], 0).is_err());
    }

    #[test]
    fn count_params_fresh_network() {
        let net = Network::<f64>::build(&mlp(), 1).unwrap();
        let c = net.count_params();
        assert_eq!((c.total, c.nonzero, c.maskable, c.active), (13, 13, 9, 9));
        assert_eq!(c.sparsity, Fraction::ZERO);
    }

    #[test]
    fn count_params_after_masking_a_third() {
        let mut net = Network::<f64>::build(&[LayerSpec::output(3, 3)], 4).unwrap();
        let mut bits = vec![true; 9];
        bits[0] = false;
        bits[4] = false;
        bits[8] = false;
        net.apply_masks(&[Mask::from_bits(3, 3, bits).unwrap()]).unwrap();
        let c = net.count_params();
        assert_eq!(c.total, 12);
        assert_eq!(c.nonzero, 9);
        assert_eq!(c.sparsity, Fraction::new(1, 3));
    }

    #[test]
    fn count_params_all_masked_leaves_biases() {
        let mut net = Network::<f64>::build(&mlp(), 1).unwrap();
        net.apply_masks(&[
            Mask::from_bits(3, 2, vec![false; 6]).unwrap(),
            Mask::from_bits(1, 3, vec![false; 3]).unwrap(),
        ])
        .unwrap();
        let c = net.count_params();
        assert_eq!(c.nonzero, 4);
        assert_eq!(c.sparsity, Fraction::new(1, 1));
    }

    #[test]
    fn zero_mask_hidden_layer_outputs_zero() {
        let mut net = Network::<f64>::build(&[LayerSpec::dense(2, 3, Nonlinearity::Relu)], 3).unwrap();
        net.apply_masks(&[Mask::from_bits(3, 2, vec![false; 6]).unwrap()]).unwrap();
        let x = Tensor::matrix(&[&[1.0, -2.0], &[0.5, 0.25]]).unwrap();
        let y = net.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn masked_weight_matches_manual_zero() {
        let net = Network::<f64>::build(&mlp(), 5).unwrap();
        // keep the raw weight under the zero mask to show it is never read
        let mut layers = net.layers().to_vec();
        let mut bits = vec![true; 6];
        bits[1] = false;
        layers[0].mask = Mask::from_bits(3, 2, bits).unwrap();
        let masked = Network::from_parts(layers, Default::default(), None).unwrap();
        assert_ne!(masked.layer(0).weight.data()[1], 0.0);
        let mut zeroed = net.clone();
        zeroed.weight_mut(0).data_mut()[1] = 0.0;
        let x = Tensor::matrix(&[&[0.3, -0.7], &[1.1, 0.4]]).unwrap();
        assert_eq!(masked.forward(&x).unwrap(), zeroed.forward(&x).unwrap());
        // all-ones mask is the plain network
        assert_eq!(net.forward(&x).unwrap().data().len(), 2);
    }

    #[test]
    fn excluded_layer_refuses_partial_mask() {
        let mut net = Network::<f64>::build(&mlp(), 1).unwrap().with_exclusions([1]).unwrap();
        assert_eq!(net.maskable_layers(), vec![0]);
        let err = net.set_mask(1, Mask::from_bits(1, 3, vec![false, true, true]).unwrap());
        assert!(err.is_err());
        assert!(net.layer(1).mask.is_all_ones());
    }
}
