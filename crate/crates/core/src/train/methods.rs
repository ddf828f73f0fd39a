//! End-to-end sparsification procedures.

use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{trim_neurons, ump_trim_quota, Mask, Network};
use crate::saliency::{
    grasp_scores, magnitude_scores, snip_scores, topk_mask, KeepPolicy, ProgressiveSchedule, SaliencyScores,
    SparsityTarget,
};
use crate::scalar::Scalar;

use super::dynamic::{CycleReport, DynamicPruneConfig, RiglHook, SparseMomentumHook};
use super::{LrSchedule, MaskPolicy, OptimizerState, StepRecord, TrainConfig, TrainOutcome, Trainer};

/// Global magnitude masks at `sparsity`. Already-masked positions rank below
/// every active weight, so raising the sparsity only ever removes more.
pub fn ump_masks<T: Scalar>(
    network: &Network<T>,
    sparsity: f64,
    target: fn(f64) -> SparsityTarget,
) -> Result<Vec<Mask>> {
    let mut scores = magnitude_scores(network);
    for (s, &l) in scores.scores.iter_mut().zip(&scores.layers) {
        for (v, &on) in s.data_mut().iter_mut().zip(network.layer(l).mask.bits()) {
            if !on {
                *v = -T::one();
            }
        }
    }
    topk_mask(&scores, target(sparsity), KeepPolicy::Largest)
}

/// One-shot global magnitude pruning of a trained network.
pub fn ump_run<T: Scalar>(trained: &Network<T>, sparsity: f64) -> Result<Network<T>> {
    let mut net = trained.clone();
    let masks = ump_masks(&net, sparsity, SparsityTarget::global)?;
    net.apply_masks(&masks)?;
    Ok(net)
}

fn require_frozen(config: &TrainConfig) -> Result<()> {
    if config.mask_policy != MaskPolicy::FrozenZero {
        return Err(Error::Precondition("this procedure trains with the frozen-zero policy".into()));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ImpOutcome<T> {
    pub network: Network<T>,
    /// Masks installed at each schedule step.
    pub phase_masks: Vec<Vec<Mask>>,
    /// Training result of each phase.
    pub phases: Vec<TrainOutcome<T>>,
}

/// Iterative magnitude pruning: for every sparsity of the schedule, prune
/// by magnitude and then train with masked weights frozen at zero. Each
/// phase continues from the previous phase's best checkpoint.
pub fn imp_run<T: Scalar>(
    network: Network<T>,
    train: &Dataset<T>,
    dev: &Dataset<T>,
    schedule: &ProgressiveSchedule,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<ImpOutcome<T>> {
    require_frozen(config)?;
    let mut current = network;
    let mut phase_masks = Vec::new();
    let mut phases = Vec::new();
    for s in schedule.steps()? {
        let masks = ump_masks(&current, s, SparsityTarget::global)?;
        current.apply_masks(&masks)?;
        phase_masks.push(masks);
        let out = Trainer::new(config, train, dev).with_observer(observer).run(current)?;
        current = out.best.clone();
        phases.push(out);
    }
    Ok(ImpOutcome { network: current, phase_masks, phases })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParpConfig {
    pub adjust_epochs: usize,
    /// Constant learning rate of the adjust phase.
    pub learning_rate: f64,
}

impl Default for ParpConfig {
    fn default() -> Self {
        ParpConfig { adjust_epochs: 1, learning_rate: 5e-3 }
    }
}

#[derive(Clone, Debug)]
pub struct ParpOutcome<T> {
    pub network: Network<T>,
    pub first_masks: Vec<Mask>,
    pub final_masks: Vec<Mask>,
    /// Positions masked by the first pruning that were nonzero after adjust.
    pub revived: usize,
    /// Positions whose mask entry differs between the two prunings.
    pub changed: usize,
    pub adjust: TrainOutcome<T>,
}

/// Prune, adjust, re-prune: magnitude-prune the trained network, train it
/// briefly with every weight free to move (carrying over `optimizer` when
/// given), then magnitude-prune again at the same sparsity.
pub fn parp_run<T: Scalar>(
    trained: &Network<T>,
    train: &Dataset<T>,
    dev: &Dataset<T>,
    sparsity: f64,
    parp: &ParpConfig,
    base: &TrainConfig,
    optimizer: Option<OptimizerState<T>>,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<ParpOutcome<T>> {
    let pruned = ump_run(trained, sparsity)?;
    let first_masks = pruned.masks();
    let adjust_cfg = TrainConfig {
        learning_rate: parp.learning_rate,
        schedule: LrSchedule::Constant,
        steps: parp.adjust_epochs * base.steps_per_epoch(train.len()),
        patience: None,
        mask_policy: MaskPolicy::Regrowable,
        ..base.clone()
    };
    let mut trainer = Trainer::new(&adjust_cfg, train, dev).with_observer(observer);
    if let Some(state) = optimizer {
        trainer = trainer.with_optimizer(state);
    }
    let adjust = trainer.run(pruned)?;
    let adjusted = &adjust.last;
    let mut revived = 0;
    for (m, &l) in first_masks.iter().zip(&adjusted.maskable_layers()) {
        let w = adjusted.layer(l).weight.data();
        revived += (0..m.len()).filter(|&p| !m.get(p) && w[p] != T::zero()).count();
    }
    let network = ump_run(adjusted, sparsity)?;
    let final_masks = network.masks();
    let changed = first_masks
        .iter()
        .zip(&final_masks)
        .map(|(a, b)| a.bits().iter().zip(b.bits()).filter(|(x, y)| x != y).count())
        .sum();
    Ok(ParpOutcome { network, first_masks, final_masks, revived, changed, adjust })
}

/// How foresight scores are gathered and read.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForesightConfig {
    pub batch_size: usize,
    /// Score on the first `n` training samples instead of all of them.
    pub subset: Option<usize>,
    pub policy: KeepPolicy,
}

impl ForesightConfig {
    pub fn snip() -> Self {
        ForesightConfig { batch_size: 64, subset: None, policy: KeepPolicy::Largest }
    }

    pub fn grasp() -> Self {
        ForesightConfig { policy: KeepPolicy::Smallest, ..Self::snip() }
    }
}

#[derive(Clone, Debug)]
pub struct ForesightOutcome<T> {
    pub scores: SaliencyScores<T>,
    pub masks: Vec<Mask>,
    pub outcome: TrainOutcome<T>,
}

/// Global masks from saved scores. Masks for several sparsities can be cut
/// from the same scores.
pub fn foresight_masks<T: Scalar>(scores: &SaliencyScores<T>, sparsity: f64, policy: KeepPolicy) -> Result<Vec<Mask>> {
    topk_mask(scores, SparsityTarget::global(sparsity), policy)
}

fn foresight_train<T: Scalar>(
    network: Network<T>,
    train: &Dataset<T>,
    dev: &Dataset<T>,
    sparsity: f64,
    config: &TrainConfig,
    foresight: &ForesightConfig,
    score: fn(&Network<T>, &Dataset<T>, usize) -> Result<SaliencyScores<T>>,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<ForesightOutcome<T>> {
    if network.initial().is_none() {
        return Err(Error::Precondition("foresight pruning needs saved initial weights".into()));
    }
    let data = match foresight.subset {
        Some(n) => train.head(n)?,
        None => train.clone(),
    };
    let scores = score(&network, &data, foresight.batch_size)?;
    let masks = foresight_masks(&scores, sparsity, foresight.policy)?;
    let mut net = network;
    net.reset_to_initial()?;
    net.apply_masks(&masks)?;
    let cfg = TrainConfig { mask_policy: MaskPolicy::FrozenZero, ..config.clone() };
    let outcome = Trainer::new(&cfg, train, dev).with_observer(observer).run(net)?;
    Ok(ForesightOutcome { scores, masks, outcome })
}

/// SNIP at initialization, then training from the saved initial weights.
pub fn snip_train<T: Scalar>(
    network: Network<T>,
    train: &Dataset<T>,
    dev: &Dataset<T>,
    sparsity: f64,
    config: &TrainConfig,
    foresight: &ForesightConfig,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<ForesightOutcome<T>> {
    foresight_train(network, train, dev, sparsity, config, foresight, snip_scores, observer)
}

/// GraSP at initialization, then training from the saved initial weights.
pub fn grasp_train<T: Scalar>(
    network: Network<T>,
    train: &Dataset<T>,
    dev: &Dataset<T>,
    sparsity: f64,
    config: &TrainConfig,
    foresight: &ForesightConfig,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<ForesightOutcome<T>> {
    foresight_train(network, train, dev, sparsity, config, foresight, grasp_scores, observer)
}

/// Sparse Momentum: global magnitude masks at the start, one cycle at the
/// end of every epoch.
pub fn sparse_momentum_train<T: Scalar>(
    network: Network<T>,
    train: &Dataset<T>,
    dev: &Dataset<T>,
    sparsity: f64,
    config: &TrainConfig,
    dynamic: &DynamicPruneConfig,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<(TrainOutcome<T>, Vec<CycleReport>)> {
    require_frozen(config)?;
    dynamic.validate()?;
    let mut net = network;
    let masks = ump_masks(&net, sparsity, SparsityTarget::global)?;
    net.apply_masks(&masks)?;
    let mut hook = SparseMomentumHook::new(&net, *dynamic);
    let out = Trainer::new(config, train, dev).with_hook(&mut hook).with_observer(observer).run(net)?;
    Ok((out, hook.reports))
}

/// RigL: per-layer magnitude masks fix each layer's sparsity, then one
/// cycle every `dynamic.interval` steps.
pub fn rigl_train<T: Scalar>(
    network: Network<T>,
    train: &Dataset<T>,
    dev: &Dataset<T>,
    sparsity: f64,
    config: &TrainConfig,
    dynamic: &DynamicPruneConfig,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<(TrainOutcome<T>, Vec<CycleReport>)> {
    require_frozen(config)?;
    dynamic.validate()?;
    let mut net = network;
    let masks = ump_masks(&net, sparsity, SparsityTarget::per_layer)?;
    net.apply_masks(&masks)?;
    let mut hook = RiglHook::new(*dynamic);
    let out = Trainer::new(config, train, dev).with_hook(&mut hook).with_observer(observer).run(net)?;
    Ok((out, hook.reports))
}

/// Structured trimming with per-layer quotas taken from global magnitude
/// pruning at `quota_source` sparsity. Returns the trimmed network and the
/// quotas used.
pub fn trim_run<T: Scalar>(trained: &Network<T>, quota_source: f64) -> Result<(Network<T>, Vec<usize>)> {
    let quota = ump_trim_quota(trained, quota_source)?;
    Ok((trim_neurons(trained, &quota)?, quota))
}
