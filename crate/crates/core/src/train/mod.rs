//! Mini-batch training and the pruning procedures built on it.
//!
//! The loop evaluates the dev loss at step 0, every `eval_every` steps and
//! at the final step, and returns the network with the lowest dev loss (the
//! earliest one on ties). Under the frozen-zero policy masked weights get
//! neither gradient nor optimizer state; under the regrowable policy masks
//! are lifted first (masked weights are already zero), so every weight can
//! move.

mod dynamic;
mod methods;
mod optim;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use rand::seq::SliceRandom;

use crate::autodiff::{Node, Record};
use crate::data::{argmax_rows, Dataset};
use crate::error::{Error, Result};
use crate::network::{LossKind, Network};
use crate::scalar::Scalar;
use crate::seed::{self, Stream};
use crate::tensor::Tensor;

pub use self::dynamic::{
    allocate_regrowth, rigl_cycle, sparse_momentum_cycle, CycleReport, DynamicPruneConfig, LayerMomentum, RiglHook,
    SparseMomentumHook,
};
pub use self::methods::{
    foresight_masks, grasp_train, imp_run, parp_run, rigl_train, snip_train, sparse_momentum_train, trim_run,
    ump_masks, ump_run, ForesightConfig, ForesightOutcome, ImpOutcome, ParpConfig, ParpOutcome,
};
pub use self::optim::{Optimizer, OptimizerState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaskPolicy {
    /// Masked weights stay exactly zero and are never updated.
    FrozenZero,
    /// Masked weights may be trained back to nonzero values.
    Regrowable,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Multiply by `factor` every `every` steps.
    StepDecay {
        every: usize,
        factor: f64,
    },
}

impl LrSchedule {
    /// Learning rate used for the 1-based optimizer step `step`.
    pub fn at(&self, base: f64, step: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::StepDecay { every, factor } => {
                let k = (step.saturating_sub(1) / every.max(1)) as i32;
                base * factor.powi(k)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub steps: usize,
    pub eval_every: usize,
    /// Stop after this many evaluations without a new best dev loss.
    pub patience: Option<usize>,
    /// Seed of the per-epoch shuffle.
    pub seed: u64,
    pub mask_policy: MaskPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::adam(),
            learning_rate: 1e-2,
            schedule: LrSchedule::Constant,
            batch_size: 32,
            steps: 500,
            eval_every: 10,
            patience: None,
            seed: 0,
            mask_policy: MaskPolicy::FrozenZero,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidArgument("batch size and eval interval must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {}", self.learning_rate)));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, train_len: usize) -> usize {
        train_len.div_ceil(self.batch_size).max(1)
    }
}

/// One row of the loss curve.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    /// Mean minibatch loss since the previous record (full training loss at
    /// step 0).
    pub train_loss: f64,
    pub dev_loss: f64,
    pub learning_rate: f64,
    pub sparsity: f64,
    pub active: usize,
    pub nonzero: usize,
}

/// Loss and, for classification, accuracy over a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: Option<f64>,
}

pub fn evaluate<T: Scalar>(network: &Network<T>, data: &Dataset<T>) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let prog = network.program(data.len(), Some(data.loss))?;
    let inputs = prog.bind(network, &data.inputs, Some(&data.targets))?;
    let out = prog.record.eval(&inputs, &[prog.loss.expect("loss attached"), prog.output])?;
    let accuracy = (data.loss == LossKind::SoftmaxCrossEntropy).then(|| {
        let hits = argmax_rows(&out[1]).iter().zip(data.labels()).filter(|(a, b)| **a == *b).count();
        hits as f64 / data.len() as f64
    });
    Ok(Metrics { loss: out[0].item().as_f64(), accuracy })
}

/// What a hook sees after each optimizer step.
pub struct StepContext<'a, T> {
    pub step: usize,
    pub epoch: usize,
    /// True on the last step of an epoch.
    pub epoch_end: bool,
    pub network: &'a mut Network<T>,
    /// Gradients with respect to the effective weights `mask ⊙ w`, one per
    /// layer, taken before the update. Masked positions are included.
    pub gradients: &'a [Tensor<T>],
    pub optimizer: &'a mut OptimizerState<T>,
}

pub trait StepHook<T> {
    fn after_step(&mut self, ctx: StepContext<'_, T>) -> Result<()>;
}

/// Hook that does nothing.
pub struct NoHook;

impl<T> StepHook<T> for NoHook {
    fn after_step(&mut self, _ctx: StepContext<'_, T>) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub best: Network<T>,
    pub last: Network<T>,
    pub best_step: usize,
    pub best_dev_loss: f64,
    pub steps_run: usize,
    pub curve: Vec<StepRecord>,
    pub optimizer: OptimizerState<T>,
}

struct StepProgram<T> {
    record: Record<T>,
    loss: Node,
    outputs: Vec<Node>,
    layers: usize,
    bias_slots: Vec<bool>,
}

impl<T: Scalar> StepProgram<T> {
    fn new(network: &Network<T>, rows: usize, loss: LossKind) -> Result<Self> {
        let mut prog = network.program(rows, Some(loss))?;
        let loss = prog.loss.expect("loss attached");
        let mut wrt = prog.effective.clone();
        wrt.extend(prog.biases.iter().flatten().copied());
        let g = prog.record.grad(loss, &wrt)?;
        let mut outputs = alloc::vec![loss];
        outputs.extend(g.nodes);
        Ok(StepProgram {
            record: prog.record,
            loss,
            outputs,
            layers: network.layers().len(),
            bias_slots: prog.biases.iter().map(Option::is_some).collect(),
        })
    }
}

/// Configurable training run.
pub struct Trainer<'a, T> {
    config: &'a TrainConfig,
    train: &'a Dataset<T>,
    dev: &'a Dataset<T>,
    optimizer: Option<OptimizerState<T>>,
    hook: Option<&'a mut dyn StepHook<T>>,
    observer: Option<&'a mut dyn FnMut(&StepRecord)>,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(config: &'a TrainConfig, train: &'a Dataset<T>, dev: &'a Dataset<T>) -> Self {
        Trainer { config, train, dev, optimizer: None, hook: None, observer: None }
    }

    /// Continue from existing optimizer state instead of a fresh one.
    pub fn with_optimizer(mut self, state: OptimizerState<T>) -> Self {
        self.optimizer = Some(state);
        self
    }

    pub fn with_hook(mut self, hook: &'a mut dyn StepHook<T>) -> Self {
        self.hook = Some(hook);
        self
    }

    /// Called with every loss-curve record as it is produced.
    pub fn with_observer(mut self, observer: &'a mut dyn FnMut(&StepRecord)) -> Self {
        self.observer = Some(observer);
        self
    }

    pub fn run(mut self, mut network: Network<T>) -> Result<TrainOutcome<T>> {
        let cfg = self.config;
        cfg.validate()?;
        if self.train.is_empty() || self.dev.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let frozen = cfg.mask_policy == MaskPolicy::FrozenZero;
        if frozen {
            network.hard_zero_masked();
        } else {
            network.lift_masks();
        }
        let mut optimizer = match self.optimizer.take() {
            Some(s) if s.fits(&network) => s,
            Some(_) => return Err(Error::Precondition("optimizer state does not match the network".into())),
            None => OptimizerState::new(cfg.optimizer, &network),
        };
        let mut no_hook = NoHook;
        let hook: &mut dyn StepHook<T> = match self.hook.take() {
            Some(h) => h,
            None => &mut no_hook,
        };

        let n = self.train.len();
        let per_epoch = cfg.steps_per_epoch(n);
        let mut rng = seed::rng(seed::stream_seed(cfg.seed, Stream::Shuffle));
        let mut order: Vec<usize> = (0..n).collect();
        let mut programs: BTreeMap<usize, StepProgram<T>> = BTreeMap::new();

        let mut curve = Vec::new();
        let initial = evaluate(&network, self.train)?;
        let dev0 = self.dev_loss(&network, 0)?;
        let rec0 = self.record(&network, 0, 0, initial.loss, dev0, cfg.learning_rate);
        curve.push(rec0);
        let mut best = network.clone();
        let mut best_step = 0;
        let mut best_dev = dev0;
        let mut stale = 0usize;
        let mut window = (0.0f64, 0usize);
        let mut steps_run = 0;

        for step in 1..=cfg.steps {
            let epoch = (step - 1) / per_epoch;
            let slot = (step - 1) % per_epoch;
            if slot == 0 {
                order.shuffle(&mut rng);
            }
            let idx = &order[slot * cfg.batch_size..((slot + 1) * cfg.batch_size).min(n)];
            let batch = self.train.select(idx)?;
            let rows = batch.len();
            if !programs.contains_key(&rows) {
                programs.insert(rows, StepProgram::new(&network, rows, self.train.loss)?);
            }
            let prog = &programs[&rows];
            let mut inputs = Vec::with_capacity(2 + 3 * prog.layers);
            inputs.push(batch.inputs);
            inputs.push(batch.targets);
            for l in network.layers() {
                inputs.push(l.weight.clone());
                if let Some(b) = &l.bias {
                    inputs.push(b.clone());
                }
                inputs.push(l.mask.to_tensor());
            }
            let mut values = prog.record.eval(&inputs, &prog.outputs).map_err(|e| diverged(step, e))?;
            let loss = values[0].item().as_f64();
            let _ = prog.loss;
            if !loss.is_finite() {
                return Err(Error::Divergence { step, detail: format!("training loss {loss}") });
            }
            let mut rest = values.split_off(1).into_iter();
            let dense: Vec<Tensor<T>> = rest.by_ref().take(prog.layers).collect();
            let bias_grads: Vec<Option<Tensor<T>>> =
                prog.bias_slots.iter().map(|&has| if has { rest.next() } else { None }).collect();
            let weight_grads: Vec<Tensor<T>> = if frozen {
                dense
                    .iter()
                    .zip(network.layers())
                    .map(|(g, l)| g.zip_map(&l.mask.to_tensor(), |g, m| g * m))
                    .collect::<Result<_>>()?
            } else {
                dense.clone()
            };
            let lr = cfg.schedule.at(cfg.learning_rate, step);
            optimizer.step(&mut network, &weight_grads, &bias_grads, lr, frozen)?;
            let epoch_end = slot + 1 == per_epoch;
            hook.after_step(StepContext {
                step,
                epoch,
                epoch_end,
                network: &mut network,
                gradients: &dense,
                optimizer: &mut optimizer,
            })?;
            if frozen {
                network.hard_zero_masked();
            }
            steps_run = step;
            window.0 += loss;
            window.1 += 1;

            if step % cfg.eval_every == 0 || step == cfg.steps {
                let dev = self.dev_loss(&network, step)?;
                let train_loss = window.0 / window.1 as f64;
                window = (0.0, 0);
                let rec = self.record(&network, step, epoch + usize::from(epoch_end), train_loss, dev, lr);
                curve.push(rec);
                if dev < best_dev {
                    best_dev = dev;
                    best_step = step;
                    best = network.clone();
                    stale = 0;
                } else {
                    stale += 1;
                    if cfg.patience.is_some_and(|p| stale >= p) {
                        break;
                    }
                }
            }
        }
        Ok(TrainOutcome { best, last: network, best_step, best_dev_loss: best_dev, steps_run, curve, optimizer })
    }

    fn dev_loss(&self, network: &Network<T>, step: usize) -> Result<f64> {
        let m = evaluate(network, self.dev).map_err(|e| diverged(step, e))?;
        if !m.loss.is_finite() {
            return Err(Error::Divergence { step, detail: format!("dev loss {}", m.loss) });
        }
        Ok(m.loss)
    }

    fn record(
        &mut self,
        network: &Network<T>,
        step: usize,
        epoch: usize,
        train_loss: f64,
        dev_loss: f64,
        lr: f64,
    ) -> StepRecord {
        let c = network.count_params();
        let rec = StepRecord {
            step,
            epoch,
            train_loss,
            dev_loss,
            learning_rate: lr,
            sparsity: c.sparsity.as_f64(),
            active: c.active,
            nonzero: c.nonzero,
        };
        if let Some(obs) = self.observer.as_mut() {
            obs(&rec);
        }
        rec
    }
}

fn diverged(step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { op } => Error::Divergence { step, detail: format!("non-finite value in `{op}`") },
        other => other,
    }
}

/// Plain training with a fresh optimizer.
pub fn train<T: Scalar>(
    network: Network<T>,
    train: &Dataset<T>,
    dev: &Dataset<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    Trainer::new(config, train, dev).run(network)
}
