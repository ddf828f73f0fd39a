//! Dynamic sparse training: Sparse Momentum and RigL prune/regrow cycles.
//!
//! Both cycles keep the number of active (unmasked) weights fixed. Pruned
//! and regrown positions are zeroed and their optimizer state cleared, so a
//! regrown weight starts from exactly 0 and moves on the next step.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::saliency::keep_count;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{OptimizerState, StepContext, StepHook};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynamicPruneConfig {
    /// Fraction of each layer's active weights cycled per event.
    pub prune_rate: f64,
    /// Smoothing coefficient of the momentum averages.
    pub beta: f64,
    /// Multiplier applied to the prune rate after every cycle.
    pub decay: f64,
    /// RigL cycle interval in optimizer steps.
    pub interval: usize,
}

impl Default for DynamicPruneConfig {
    fn default() -> Self {
        DynamicPruneConfig { prune_rate: 0.2, beta: 0.9, decay: 0.99, interval: 100 }
    }
}

impl DynamicPruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prune_rate > 0.0 && self.prune_rate < 1.0) {
            return Err(Error::InvalidArgument(format!("prune rate {} outside (0, 1)", self.prune_rate)));
        }
        if !(0.0..1.0).contains(&self.beta) || !(self.decay > 0.0 && self.decay <= 1.0) || self.interval == 0 {
            return Err(Error::InvalidArgument("invalid momentum, decay or interval".into()));
        }
        Ok(())
    }
}

/// Per-layer smoothed gradient magnitude plus per-position smoothed
/// gradients used to pick regrowth sites.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerMomentum {
    /// One value per maskable layer.
    pub layer: Vec<f64>,
    /// Exponential average of the dense gradient, one tensor per maskable
    /// layer.
    pub position: Vec<Vec<f64>>,
}

impl LayerMomentum {
    pub fn new<T: Scalar>(network: &Network<T>) -> Self {
        let ids = network.maskable_layers();
        LayerMomentum {
            layer: vec![0.0; ids.len()],
            position: ids.iter().map(|&i| vec![0.0; network.layer(i).weight.len()]).collect(),
        }
    }

    /// `M ← βM + (1 − β)·g` elementwise for the position averages.
    pub fn observe<T: Scalar>(&mut self, network: &Network<T>, gradients: &[Tensor<T>], beta: f64) {
        for (k, &i) in network.maskable_layers().iter().enumerate() {
            for (m, g) in self.position[k].iter_mut().zip(gradients[i].data()) {
                *m = beta * *m + (1.0 - beta) * g.as_f64();
            }
        }
    }

    /// `M_i ← βM_i + (1 − β)·mean|g_i|` once per cycle.
    pub fn update_layers<T: Scalar>(&mut self, network: &Network<T>, gradients: &[Tensor<T>], beta: f64) {
        for (k, &i) in network.maskable_layers().iter().enumerate() {
            let g = &gradients[i];
            let mean = g.data().iter().map(|v| v.abs().as_f64()).sum::<f64>() / g.len() as f64;
            self.layer[k] = beta * self.layer[k] + (1.0 - beta) * mean;
        }
    }
}

/// Per-maskable-layer counts of one cycle.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CycleReport {
    pub pruned: Vec<usize>,
    pub regrown: Vec<usize>,
    /// `(layer index, flat position)` of every regrown weight.
    pub regrown_sites: Vec<(usize, usize)>,
}

/// Splits `budget` across layers proportionally to `weights` with
/// largest-remainder rounding, never exceeding `capacity`. Overflow from a
/// saturated layer is shared among the others in the same way. Layers with
/// zero total weight share equally.
pub fn allocate_regrowth(budget: usize, weights: &[f64], capacity: &[usize]) -> Result<Vec<usize>> {
    let room: usize = capacity.iter().sum();
    if budget > room {
        return Err(Error::Precondition(format!("cannot regrow {budget} weights into {room} free slots")));
    }
    let n = weights.len();
    let mut out = vec![0usize; n];
    let mut left = budget;
    while left > 0 {
        let open: Vec<usize> = (0..n).filter(|&i| out[i] < capacity[i]).collect();
        let total: f64 = open.iter().map(|&i| weights[i].max(0.0)).sum();
        let share = |i: usize| if total > 0.0 { weights[i].max(0.0) / total } else { 1.0 / open.len() as f64 };
        let exact: Vec<f64> = open.iter().map(|&i| left as f64 * share(i)).collect();
        let mut give: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut rest = left - give.iter().sum::<usize>();
        let mut by_remainder: Vec<usize> = (0..open.len()).collect();
        by_remainder.sort_by(|&a, &b| {
            let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &j in &by_remainder {
            if rest == 0 {
                break;
            }
            give[j] += 1;
            rest -= 1;
        }
        let mut placed = 0;
        for (j, &i) in open.iter().enumerate() {
            let g = give[j].min(capacity[i] - out[i]);
            out[i] += g;
            placed += g;
        }
        left -= placed;
    }
    Ok(out)
}

/// Positions sorted by `key` descending (or ascending), ties by index.
fn ranked(positions: &mut [usize], key: impl Fn(usize) -> f64, descending: bool) {
    positions.sort_by(|&a, &b| {
        let o = key(a).total_cmp(&key(b));
        (if descending { o.reverse() } else { o }).then(a.cmp(&b))
    });
}

/// Prunes `rate` of each maskable layer's active weights by magnitude and
/// returns the number pruned per layer.
fn prune_smallest<T: Scalar>(
    network: &mut Network<T>,
    rate: f64,
    optimizer: Option<&mut OptimizerState<T>>,
) -> Result<Vec<usize>> {
    let ids = network.maskable_layers();
    let mut counts = Vec::with_capacity(ids.len());
    let mut resets: Vec<(usize, Vec<usize>)> = Vec::new();
    for &i in &ids {
        let layer = network.layer(i);
        let mut active: Vec<usize> = (0..layer.mask.len()).filter(|&p| layer.mask.get(p)).collect();
        let drop = active.len() - keep_count(rate, active.len());
        let w = layer.weight.data();
        ranked(&mut active, |p| w[p].abs().as_f64(), false);
        let mut mask = layer.mask.clone();
        for &p in &active[..drop] {
            mask.set(p, false);
        }
        network.set_mask(i, mask)?;
        resets.push((i, active[..drop].to_vec()));
        counts.push(drop);
    }
    if let Some(opt) = optimizer {
        for (i, pos) in resets {
            opt.reset_weight_positions(i, &pos);
        }
    }
    Ok(counts)
}

/// Turns on `count` inactive positions of layer `i` chosen by `score`
/// (highest first) and sets them to exactly zero.
fn regrow<T: Scalar>(
    network: &mut Network<T>,
    i: usize,
    count: usize,
    score: impl Fn(usize) -> f64,
    optimizer: Option<&mut OptimizerState<T>>,
) -> Result<Vec<usize>> {
    let layer = network.layer(i);
    let mut inactive: Vec<usize> = (0..layer.mask.len()).filter(|&p| !layer.mask.get(p)).collect();
    if count > inactive.len() {
        return Err(Error::Precondition(format!("layer {i} has only {} free slots", inactive.len())));
    }
    ranked(&mut inactive, score, true);
    let chosen = inactive[..count].to_vec();
    let mut mask = layer.mask.clone();
    for &p in &chosen {
        mask.set(p, true);
        network.weight_mut(i).data_mut()[p] = T::zero();
    }
    network.set_mask(i, mask)?;
    if let Some(opt) = optimizer {
        opt.reset_weight_positions(i, &chosen);
    }
    Ok(chosen)
}

/// One Sparse Momentum cycle: prune the smallest `rate` of active weights in
/// every layer by magnitude, share the freed budget across layers in
/// proportion to the layer momenta, and regrow each layer's share at the
/// inactive positions with the largest smoothed gradient magnitude.
pub fn sparse_momentum_cycle<T: Scalar>(
    network: &mut Network<T>,
    momentum: &LayerMomentum,
    rate: f64,
    mut optimizer: Option<&mut OptimizerState<T>>,
) -> Result<CycleReport> {
    let ids = network.maskable_layers();
    if momentum.layer.len() != ids.len() {
        return Err(Error::Precondition("momentum does not match the maskable layers".into()));
    }
    if rate <= 0.0 {
        return Ok(CycleReport { pruned: vec![0; ids.len()], regrown: vec![0; ids.len()], regrown_sites: Vec::new() });
    }
    let pruned = prune_smallest(network, rate, optimizer.as_deref_mut())?;
    let capacity: Vec<usize> = ids
        .iter()
        .map(|&i| {
            let m = &network.layer(i).mask;
            m.len() - m.count_ones()
        })
        .collect();
    let regrown = allocate_regrowth(pruned.iter().sum(), &momentum.layer, &capacity)?;
    let mut sites = Vec::new();
    for (k, &i) in ids.iter().enumerate() {
        let pos = &momentum.position[k];
        let chosen = regrow(network, i, regrown[k], |p| pos[p].abs(), optimizer.as_deref_mut())?;
        sites.extend(chosen.into_iter().map(|p| (i, p)));
    }
    Ok(CycleReport { pruned, regrown, regrown_sites: sites })
}

/// One RigL cycle: per layer, prune the smallest `rate` of active weights
/// by magnitude and regrow as many inactive positions with the largest
/// current gradient magnitude. `gradients` holds one dense gradient per
/// layer of the network.
pub fn rigl_cycle<T: Scalar>(
    network: &mut Network<T>,
    gradients: &[Tensor<T>],
    rate: f64,
    mut optimizer: Option<&mut OptimizerState<T>>,
) -> Result<CycleReport> {
    if gradients.len() != network.layers().len()
        || gradients.iter().zip(network.layers()).any(|(g, l)| g.shape() != l.weight.shape())
    {
        return Err(Error::ShapeMismatch {
            op: "rigl_cycle",
            detail: "one gradient per layer, shaped like its weight".into(),
        });
    }
    let ids = network.maskable_layers();
    if rate <= 0.0 {
        return Ok(CycleReport { pruned: vec![0; ids.len()], regrown: vec![0; ids.len()], regrown_sites: Vec::new() });
    }
    let pruned = prune_smallest(network, rate, optimizer.as_deref_mut())?;
    let mut sites = Vec::new();
    for (k, &i) in ids.iter().enumerate() {
        let g = gradients[i].data();
        let chosen = regrow(network, i, pruned[k], |p| g[p].abs().as_f64(), optimizer.as_deref_mut())?;
        sites.extend(chosen.into_iter().map(|p| (i, p)));
    }
    Ok(CycleReport { regrown: pruned.clone(), pruned, regrown_sites: sites })
}

/// Runs a Sparse Momentum cycle at the end of every epoch.
pub struct SparseMomentumHook {
    pub config: DynamicPruneConfig,
    pub momentum: LayerMomentum,
    pub rate: f64,
    pub reports: Vec<CycleReport>,
}

impl SparseMomentumHook {
    pub fn new<T: Scalar>(network: &Network<T>, config: DynamicPruneConfig) -> Self {
        SparseMomentumHook {
            config,
            momentum: LayerMomentum::new(network),
            rate: config.prune_rate,
            reports: Vec::new(),
        }
    }
}

impl<T: Scalar> StepHook<T> for SparseMomentumHook {
    fn after_step(&mut self, ctx: StepContext<'_, T>) -> Result<()> {
        self.momentum.observe(ctx.network, ctx.gradients, self.config.beta);
        if ctx.epoch_end {
            self.momentum.update_layers(ctx.network, ctx.gradients, self.config.beta);
            let r = sparse_momentum_cycle(ctx.network, &self.momentum, self.rate, Some(ctx.optimizer))?;
            self.reports.push(r);
            self.rate *= self.config.decay;
        }
        Ok(())
    }
}

/// Runs a RigL cycle every `interval` steps.
pub struct RiglHook {
    pub config: DynamicPruneConfig,
    pub rate: f64,
    pub reports: Vec<CycleReport>,
}

impl RiglHook {
    pub fn new(config: DynamicPruneConfig) -> Self {
        RiglHook { config, rate: config.prune_rate, reports: Vec::new() }
    }
}

impl<T: Scalar> StepHook<T> for RiglHook {
    fn after_step(&mut self, ctx: StepContext<'_, T>) -> Result<()> {
        if ctx.step % self.config.interval == 0 {
            let r = rigl_cycle(ctx.network, ctx.gradients, self.rate, Some(ctx.optimizer))?;
            self.reports.push(r);
            self.rate *= self.config.decay;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LayerSpec, Mask};

    #[test]
    fn allocation_follows_momentum() {
        assert_eq!(allocate_regrowth(4, &[0.75, 0.25], &[10, 10]).unwrap(), vec![3, 1]);
        assert_eq!(allocate_regrowth(4, &[0.0, 0.0], &[10, 10]).unwrap(), vec![2, 2]);
        // overflow of the first layer goes to the second
        assert_eq!(allocate_regrowth(4, &[0.9, 0.1], &[2, 10]).unwrap(), vec![2, 2]);
        assert!(allocate_regrowth(5, &[1.0], &[4]).is_err());
    }

    #[test]
    fn largest_remainder_sums_exactly() {
        let a = allocate_regrowth(10, &[1.0, 1.0, 1.0], &[10, 10, 10]).unwrap();
        assert_eq!(a.iter().sum::<usize>(), 10);
        assert_eq!(a, vec![4, 3, 3]);
    }

    #[test]
    fn rigl_example() {
        let mut net = Network::<f64>::build(&[LayerSpec::output(5, 1)], 0).unwrap();
        *net.weight_mut(0) = Tensor::matrix(&[&[0.5, 0.01, 0.3, 0.0, 0.0]]).unwrap();
        net.set_mask(0, Mask::from_bits(1, 5, vec![true, true, true, false, false]).unwrap()).unwrap();
        let g = [Tensor::matrix(&[&[0.0, 0.1, 0.0, 0.9, 0.2]]).unwrap()];
        let r = rigl_cycle(&mut net, &g, 0.3, None).unwrap();
        assert_eq!(r.pruned, vec![1]);
        assert_eq!(r.regrown_sites, vec![(0, 3)]);
        assert_eq!(net.layer(0).mask.bits(), &[true, false, true, true, false]);
        assert_eq!(net.layer(0).weight.data()[3], 0.0);
        assert_eq!(net.layer(0).weight.data()[1], 0.0);
    }

    #[test]
    fn zero_rate_changes_nothing() {
        let mut net = Network::<f64>::build(&[LayerSpec::output(4, 2)], 0).unwrap();
        let before = net.clone();
        let g = [Tensor::zeros(&[2, 4])];
        rigl_cycle(&mut net, &g, 0.0, None).unwrap();
        let m = LayerMomentum::new(&net);
        sparse_momentum_cycle(&mut net, &m, 0.0, None).unwrap();
        assert_eq!(net, before);
    }
}
