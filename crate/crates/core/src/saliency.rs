//! Per-weight importance scores and top-k masking.
//!
//! Scores only cover maskable layers (prunable and not excluded); biases are
//! never scored. Foresight scores (SNIP, GraSP) accumulate over every sample
//! of the dataset they are given, using the summed per-sample loss, so the
//! result does not depend on how the data is cut into batches.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Node, Record};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{Mask, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScoreMethod {
    Magnitude,
    Snip,
    Grasp,
    Momentum,
}

/// One score tensor per maskable layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyScores<T> {
    pub method: ScoreMethod,
    /// Layer index of each score tensor.
    pub layers: Vec<usize>,
    pub scores: Vec<Tensor<T>>,
}

impl<T: Scalar> SaliencyScores<T> {
    pub fn total_len(&self) -> usize {
        self.scores.iter().map(|s| s.len()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scope {
    Global,
    PerLayer,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparsityTarget {
    pub fraction: f64,
    pub scope: Scope,
}

/// `round_half_up((1 - fraction) × n)`.
pub fn keep_count(fraction: f64, n: usize) -> usize {
    let x = (1.0 - fraction) * n as f64;
    // absorb representation error such as (1 - 0.3) * 10 = 6.999...
    let k = num_traits::Float::floor(x + 0.5 + 1e-9) as usize;
    k.min(n)
}

impl SparsityTarget {
    pub fn global(fraction: f64) -> Self {
        SparsityTarget { fraction, scope: Scope::Global }
    }

    pub fn per_layer(fraction: f64) -> Self {
        SparsityTarget { fraction, scope: Scope::PerLayer }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.fraction) {
            return Err(Error::SparsityOutOfRange(self.fraction));
        }
        Ok(())
    }

    /// Number of ones a mask over `sizes` will contain.
    pub fn keep_total(&self, sizes: &[usize]) -> usize {
        match self.scope {
            Scope::Global => keep_count(self.fraction, sizes.iter().sum()),
            Scope::PerLayer => sizes.iter().map(|&n| keep_count(self.fraction, n)).sum(),
        }
    }
}

/// Which end of the ranking survives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KeepPolicy {
    Largest,
    Smallest,
}

/// Ranks `(score, flat index)` pairs: best first, ties by ascending index.
fn rank(entries: &mut [(f64, usize)], policy: KeepPolicy) {
    entries.sort_by(|a, b| {
        let primary = match policy {
            KeepPolicy::Largest => b.0.total_cmp(&a.0),
            KeepPolicy::Smallest => a.0.total_cmp(&b.0),
        };
        primary.then(a.1.cmp(&b.1))
    });
}

/// Keeps exactly `target.keep_total(..)` weights.
pub fn topk_mask<T: Scalar>(
    scores: &SaliencyScores<T>,
    target: SparsityTarget,
    policy: KeepPolicy,
) -> Result<Vec<Mask>> {
    target.validate()?;
    let mut bits: Vec<Vec<bool>> = scores.scores.iter().map(|s| vec![false; s.len()]).collect();
    match target.scope {
        Scope::Global => {
            let mut entries = Vec::with_capacity(scores.total_len());
            let mut offsets = Vec::with_capacity(scores.scores.len());
            for s in &scores.scores {
                let base = entries.len();
                offsets.push(base);
                entries.extend(s.data().iter().enumerate().map(|(i, v)| (v.as_f64(), base + i)));
            }
            let k = keep_count(target.fraction, entries.len());
            rank(&mut entries, policy);
            for &(_, flat) in &entries[..k] {
                let layer = offsets.partition_point(|&o| o <= flat) - 1;
                bits[layer][flat - offsets[layer]] = true;
            }
        }
        Scope::PerLayer => {
            for (s, b) in scores.scores.iter().zip(bits.iter_mut()) {
                let mut entries: Vec<(f64, usize)> =
                    s.data().iter().enumerate().map(|(i, v)| (v.as_f64(), i)).collect();
                let k = keep_count(target.fraction, entries.len());
                rank(&mut entries, policy);
                for &(_, i) in &entries[..k] {
                    b[i] = true;
                }
            }
        }
    }
    scores
        .scores
        .iter()
        .zip(bits)
        .map(|(s, b)| {
            let (rows, cols) = match s.shape() {
                [r, c] => (*r, *c),
                other => {
                    return Err(Error::ShapeMismatch {
                        op: "topk_mask",
                        detail: format!("score tensor {other:?} is not a matrix"),
                    })
                }
            };
            Mask::from_bits(rows, cols, b)
        })
        .collect()
}

/// `|mask ⊙ w|` for every maskable weight.
pub fn magnitude_scores<T: Scalar>(network: &Network<T>) -> SaliencyScores<T> {
    let layers = network.maskable_layers();
    let scores = layers.iter().map(|&i| network.layer(i).effective_weight().map(|v| v.abs())).collect();
    SaliencyScores { method: ScoreMethod::Magnitude, layers, scores }
}

fn require_dense_masks<T: Scalar>(network: &Network<T>) -> Result<()> {
    if network.layers().iter().all(|l| l.mask.is_all_ones()) {
        Ok(())
    } else {
        Err(Error::Precondition("foresight scores need all-ones masks".into()))
    }
}

fn add_into<T: Scalar>(acc: &mut [Tensor<T>], values: &[Tensor<T>]) -> Result<()> {
    for (a, v) in acc.iter_mut().zip(values) {
        *a = a.zip_map(v, |x, y| x + y)?;
    }
    Ok(())
}

/// SNIP connection sensitivity: `|Σ_samples ∂ℓ/∂m_j|` at `m = 1`, which by
/// the chain rule equals `|w_j · Σ ∂ℓ/∂w_j|`.
pub fn snip_scores<T: Scalar>(network: &Network<T>, data: &Dataset<T>, batch_size: usize) -> Result<SaliencyScores<T>> {
    require_dense_masks(network)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let layers = network.maskable_layers();
    let mut acc: Vec<Tensor<T>> = layers.iter().map(|&i| Tensor::zeros(network.layer(i).weight.shape())).collect();
    for batch in data.batches(batch_size)? {
        let mut prog = network.program(batch.len(), Some(data.loss))?;
        let loss = prog.loss.expect("loss attached");
        let summed = prog.record.scale(loss, batch.len() as f64)?;
        let masks: Vec<Node> = layers.iter().map(|&i| prog.masks[i]).collect();
        let g = prog.record.grad(summed, &masks)?;
        let inputs = prog.bind(network, &batch.inputs, Some(&batch.targets))?;
        let values = prog.record.eval(&inputs, &g.nodes)?;
        add_into(&mut acc, &values)?;
    }
    Ok(SaliencyScores {
        method: ScoreMethod::Snip,
        layers,
        scores: acc.into_iter().map(|t| t.map(|v| v.abs())).collect(),
    })
}

/// GraSP scores `-w ⊙ Hg`, where `g` is the dataset gradient and `H` the
/// dataset Hessian of the summed loss. Negative values are meaningful.
pub fn grasp_scores<T: Scalar>(
    network: &Network<T>,
    data: &Dataset<T>,
    batch_size: usize,
) -> Result<SaliencyScores<T>> {
    require_dense_masks(network)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let layers = network.maskable_layers();
    let batches = data.batches(batch_size)?;
    let mut g_total: Vec<Tensor<T>> = layers.iter().map(|&i| Tensor::zeros(network.layer(i).weight.shape())).collect();
    for batch in &batches {
        let mut prog = network.program(batch.len(), Some(data.loss))?;
        let loss = prog.loss.expect("loss attached");
        let summed = prog.record.scale(loss, batch.len() as f64)?;
        let weights: Vec<Node> = layers.iter().map(|&i| prog.weights[i]).collect();
        let g = prog.record.grad(summed, &weights)?;
        let inputs = prog.bind(network, &batch.inputs, Some(&batch.targets))?;
        add_into(&mut g_total, &prog.record.eval(&inputs, &g.nodes)?)?;
    }
    let mut hg: Vec<Tensor<T>> = g_total.iter().map(|t| Tensor::zeros(t.shape())).collect();
    for batch in &batches {
        let mut prog = network.program(batch.len(), Some(data.loss))?;
        let loss = prog.loss.expect("loss attached");
        let summed = prog.record.scale(loss, batch.len() as f64)?;
        let weights: Vec<Node> = layers.iter().map(|&i| prog.weights[i]).collect();
        let dirs = g_total.iter().map(|t| prog.record.input(t.shape())).collect::<Result<Vec<Node>>>()?;
        let hv = prog.record.hessian_vector_product(summed, &weights, &dirs)?;
        let mut inputs = prog.bind(network, &batch.inputs, Some(&batch.targets))?;
        inputs.extend(g_total.iter().cloned());
        add_into(&mut hg, &prog.record.eval(&inputs, &hv)?)?;
    }
    let scores = layers
        .iter()
        .zip(&hg)
        .map(|(&i, h)| network.layer(i).weight.zip_map(h, |w, h| -(w * h)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SaliencyScores { method: ScoreMethod::Grasp, layers, scores })
}

/// Builds the loss for batch `b` given nodes standing for the (effective)
/// parameters. The closure must not declare inputs of its own.
pub trait LossBuilder<T> {
    fn build(&mut self, record: &mut Record<T>, params: &[Node], batch: usize) -> Result<Node>;
}

impl<T, F> LossBuilder<T> for F
where
    F: FnMut(&mut Record<T>, &[Node], usize) -> Result<Node>,
{
    fn build(&mut self, record: &mut Record<T>, params: &[Node], batch: usize) -> Result<Node> {
        self(record, params, batch)
    }
}

fn check_no_extra_inputs<T: Scalar>(record: &Record<T>, expected: usize) -> Result<()> {
    if record.input_shapes().len() != expected {
        return Err(Error::Precondition("loss builders must use constants, not inputs".into()));
    }
    Ok(())
}

/// SNIP scores for an arbitrary loss: each parameter enters as `m ⊙ w`
/// with `m = 1`, and the score is `|Σ_b ∂L_b/∂m|`.
pub fn snip_scores_with<T: Scalar>(
    weights: &[Tensor<T>],
    batches: usize,
    mut loss: impl LossBuilder<T>,
) -> Result<Vec<Tensor<T>>> {
    if batches == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut acc: Vec<Tensor<T>> = weights.iter().map(|w| Tensor::zeros(w.shape())).collect();
    for b in 0..batches {
        let mut rec = Record::new();
        let w = weights.iter().map(|t| rec.input(t.shape())).collect::<Result<Vec<_>>>()?;
        let m = weights.iter().map(|t| rec.input(t.shape())).collect::<Result<Vec<_>>>()?;
        let eff = w.iter().zip(&m).map(|(&w, &m)| rec.mul(w, m)).collect::<Result<Vec<_>>>()?;
        let l = loss.build(&mut rec, &eff, b)?;
        check_no_extra_inputs(&rec, 2 * weights.len())?;
        let g = rec.grad(l, &m)?;
        let mut inputs: Vec<Tensor<T>> = weights.to_vec();
        inputs.extend(weights.iter().map(|t| Tensor::ones(t.shape())));
        add_into(&mut acc, &rec.eval(&inputs, &g.nodes)?)?;
    }
    Ok(acc.into_iter().map(|t| t.map(|v| v.abs())).collect())
}

/// GraSP scores `-w ⊙ Hg` for an arbitrary loss summed over `batches`.
pub fn grasp_scores_with<T: Scalar>(
    weights: &[Tensor<T>],
    batches: usize,
    mut loss: impl LossBuilder<T>,
) -> Result<Vec<Tensor<T>>> {
    if batches == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut g_total: Vec<Tensor<T>> = weights.iter().map(|w| Tensor::zeros(w.shape())).collect();
    for b in 0..batches {
        let mut rec = Record::new();
        let w = weights.iter().map(|t| rec.input(t.shape())).collect::<Result<Vec<_>>>()?;
        let l = loss.build(&mut rec, &w, b)?;
        check_no_extra_inputs(&rec, weights.len())?;
        let g = rec.grad(l, &w)?;
        add_into(&mut g_total, &rec.eval(weights, &g.nodes)?)?;
    }
    let mut hg: Vec<Tensor<T>> = weights.iter().map(|w| Tensor::zeros(w.shape())).collect();
    for b in 0..batches {
        let mut rec = Record::new();
        let w = weights.iter().map(|t| rec.input(t.shape())).collect::<Result<Vec<_>>>()?;
        let l = loss.build(&mut rec, &w, b)?;
        check_no_extra_inputs(&rec, weights.len())?;
        let v = weights.iter().map(|t| rec.input(t.shape())).collect::<Result<Vec<_>>>()?;
        let hv = rec.hessian_vector_product(l, &w, &v)?;
        let mut inputs: Vec<Tensor<T>> = weights.to_vec();
        inputs.extend(g_total.iter().cloned());
        add_into(&mut hg, &rec.eval(&inputs, &hv)?)?;
    }
    weights.iter().zip(&hg).map(|(w, h)| w.zip_map(h, |w, h| -(w * h))).collect()
}

/// Linear sparsity ramp used by progressive pruning.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProgressiveSchedule {
    pub initial: f64,
    pub target: f64,
    pub steps: usize,
}

impl ProgressiveSchedule {
    pub fn new(initial: f64, target: f64, steps: usize) -> Self {
        ProgressiveSchedule { initial, target, steps }
    }

    /// `steps` sparsities from `initial` to exactly `target`, evenly spaced.
    pub fn steps(&self) -> Result<Vec<f64>> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one step".into()));
        }
        if self.target < self.initial {
            return Err(Error::DecreasingSchedule { start: self.initial, end: self.target });
        }
        for s in [self.initial, self.target] {
            if !(0.0..1.0).contains(&s) {
                return Err(Error::SparsityOutOfRange(s));
            }
        }
        if self.steps == 1 {
            return Ok(vec![self.target]);
        }
        let span = self.target - self.initial;
        let last = (self.steps - 1) as f64;
        let mut out: Vec<f64> = (0..self.steps).map(|i| self.initial + span * i as f64 / last).collect();
        *out.last_mut().expect("non-empty") = self.target;
        Ok(out)
    }
}

/// Free-function form of [`ProgressiveSchedule::steps`].
pub fn schedule_steps(schedule: &ProgressiveSchedule) -> Result<Vec<f64>> {
    schedule.steps()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LayerSpec, Nonlinearity};

    fn scores(values: &[f64]) -> SaliencyScores<f64> {
        SaliencyScores {
            method: ScoreMethod::Magnitude,
            layers: vec![0],
            scores: vec![Tensor::new(vec![1, values.len()], values.to_vec()).unwrap()],
        }
    }

    #[test]
    fn top_two_of_four() {
        let m = topk_mask(&scores(&[0.5, 0.1, 0.9, 0.3]), SparsityTarget::global(0.5), KeepPolicy::Largest).unwrap();
        assert_eq!(m[0].bits(), &[true, false, true, false]);
    }

    #[test]
    fn zero_sparsity_keeps_everything() {
        let m = topk_mask(&scores(&[0.5, 0.1, 0.9, 0.3]), SparsityTarget::global(0.0), KeepPolicy::Largest).unwrap();
        assert!(m[0].is_all_ones());
    }

    #[test]
    fn ties_prefer_low_index() {
        let m = topk_mask(&scores(&[1.0; 4]), SparsityTarget::global(0.5), KeepPolicy::Largest).unwrap();
        assert_eq!(m[0].bits(), &[true, true, false, false]);
        let m = topk_mask(&scores(&[1.0; 4]), SparsityTarget::global(0.5), KeepPolicy::Smallest).unwrap();
        assert_eq!(m[0].bits(), &[true, true, false, false]);
    }

    #[test]
    fn keep_smallest_keeps_most_negative() {
        let m = topk_mask(&scores(&[-4.0, -16.0]), SparsityTarget::global(0.5), KeepPolicy::Smallest).unwrap();
        assert_eq!(m[0].bits(), &[false, true]);
    }

    #[test]
    fn full_sparsity_is_rejected() {
        assert!(topk_mask(&scores(&[1.0]), SparsityTarget::global(1.0), KeepPolicy::Largest).is_err());
    }

    #[test]
    fn keep_count_rounds_half_up() {
        assert_eq!(keep_count(0.5, 5), 3);
        assert_eq!(keep_count(0.3, 10), 7);
        assert_eq!(keep_count(0.1, 9), 8);
        assert_eq!(keep_count(0.0, 9), 9);
    }

    #[test]
    fn magnitude_is_absolute_effective_weight() {
        let mut net = Network::<f64>::build(&[LayerSpec::output(3, 1)], 0).unwrap();
        *net.weight_mut(0) = Tensor::matrix(&[&[0.1, -0.5, 0.3]]).unwrap();
        let s = magnitude_scores(&net);
        assert_eq!(s.scores[0].data(), &[0.1, 0.5, 0.3]);
        net.set_mask(0, Mask::from_bits(1, 3, vec![true, false, true]).unwrap()).unwrap();
        assert_eq!(magnitude_scores(&net).scores[0].data(), &[0.1, 0.0, 0.3]);
    }

    #[test]
    fn excluded_layers_are_not_scored() {
        let specs = [LayerSpec::dense(2, 3, Nonlinearity::Relu), LayerSpec::output(3, 1)];
        let net = Network::<f64>::build(&specs, 0).unwrap().with_exclusions([1]).unwrap();
        let s = magnitude_scores(&net);
        assert_eq!(s.layers, vec![0]);
        assert_eq!(topk_mask(&s, SparsityTarget::global(0.5), KeepPolicy::Largest).unwrap().len(), 1);
    }

    #[test]
    fn schedule_examples() {
        let s = ProgressiveSchedule::new(0.1, 0.6, 6).steps().unwrap();
        for (a, b) in s.iter().zip([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(s[5], 0.6);
        assert_eq!(ProgressiveSchedule::new(0.4, 0.4, 1).steps().unwrap(), vec![0.4]);
        let s = ProgressiveSchedule::new(0.0, 0.8, 4).steps().unwrap();
        for (a, b) in s.iter().zip([0.0, 0.8 / 3.0, 1.6 / 3.0, 0.8]) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(matches!(ProgressiveSchedule::new(0.5, 0.2, 3).steps(), Err(Error::DecreasingSchedule { .. })));
    }
}
