//! Experiment and sweep configuration files (TOML).
//!
//! Parsing is strict: unknown keys anywhere are rejected. Every section
//! except `task` and `method` has defaults, and a serialized config always
//! parses back to an identical value. The grammar is documented in
//! `docs/config.md`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparsetrain_core::data::Task;
use sparsetrain_core::network::{LayerSpec, Nonlinearity};
use sparsetrain_core::saliency::KeepPolicy;
use sparsetrain_core::train::{
    DynamicPruneConfig, ForesightConfig, LrSchedule, MaskPolicy, Optimizer, ParpConfig, TrainConfig,
};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskName {
    SyntheticRegression,
    TwoClassSpiral,
    SmallMulticlass,
}

impl TaskName {
    pub fn task(self) -> Task {
        match self {
            TaskName::SyntheticRegression => Task::SyntheticRegression,
            TaskName::TwoClassSpiral => Task::TwoClassSpiral,
            TaskName::SmallMulticlass => Task::SmallMulticlass,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dense,
    Ump,
    Imp,
    Parp,
    Snip,
    Grasp,
    SparseMomentum,
    Rigl,
    Trim,
    Svd,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Dense,
        Method::Ump,
        Method::Imp,
        Method::Parp,
        Method::Snip,
        Method::Grasp,
        Method::SparseMomentum,
        Method::Rigl,
        Method::Trim,
        Method::Svd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dense => "dense",
            Method::Ump => "ump",
            Method::Imp => "imp",
            Method::Parp => "parp",
            Method::Snip => "snip",
            Method::Grasp => "grasp",
            Method::SparseMomentum => "sparse-momentum",
            Method::Rigl => "rigl",
            Method::Trim => "trim",
            Method::Svd => "svd",
        }
    }

    pub fn from_name(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Methods driven by the `sparsity` grid.
    pub fn uses_sparsity(self) -> bool {
        !matches!(self, Method::Dense | Method::Svd)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    /// Widths of the hidden layers; the input and output widths come from
    /// the task.
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection { hidden: vec![32, 32], activation: Activation::Tanh }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerName {
    Adam,
    SgdMomentum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrDecay {
    pub every: usize,
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub optimizer: OptimizerName,
    pub learning_rate: f64,
    /// SGD momentum coefficient.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub eval_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_decay: Option<LrDecay>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            optimizer: OptimizerName::Adam,
            learning_rate: 1e-2,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            steps: 2000,
            eval_every: 25,
            patience: None,
            lr_decay: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UmpSection {
    /// Frozen-zero fine-tuning steps after pruning (0 = prune only).
    pub finetune_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpSection {
    /// Sparsity of the first pruning phase (capped at the target).
    pub initial: f64,
    pub phases: usize,
    /// Training steps per phase; defaults to `train.steps / phases`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_steps: Option<usize>,
}

impl Default for ImpSection {
    fn default() -> Self {
        ImpSection { initial: 0.1, phases: 3, phase_steps: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParpSection {
    pub adjust_epochs: usize,
    /// Constant learning rate of the adjust phase.
    pub learning_rate: f64,
    /// Continue from the baseline's optimizer state.
    pub keep_optimizer: bool,
}

impl Default for ParpSection {
    fn default() -> Self {
        let d = ParpConfig::default();
        ParpSection { adjust_epochs: d.adjust_epochs, learning_rate: d.learning_rate, keep_optimizer: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForesightSection {
    pub batch_size: usize,
    /// Score on the first `n` training samples only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset: Option<usize>,
}

impl Default for ForesightSection {
    fn default() -> Self {
        ForesightSection { batch_size: 64, subset: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicSection {
    pub prune_rate: f64,
    /// Momentum smoothing coefficient (Sparse Momentum).
    pub beta: f64,
    /// Multiplicative prune-rate decay per cycle.
    pub decay: f64,
    /// Steps between RigL cycles.
    pub interval: usize,
}

impl Default for DynamicSection {
    fn default() -> Self {
        let d = DynamicPruneConfig::default();
        DynamicSection { prune_rate: d.prune_rate, beta: d.beta, decay: d.decay, interval: d.interval }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrimSection {
    /// Magnitude-pruning sparsity whose per-layer removal fractions set the
    /// neuron quotas, one entry per `sparsity` value. Empty: calibrate each
    /// run so the parameter count drops by at least the target fraction.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub quota_source: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvdSection {
    /// Fraction of each layer's full rank to keep; one run per entry.
    pub rank_fraction: Vec<f64>,
}

impl Default for SvdSection {
    fn default() -> Self {
        SvdSection { rank_fraction: vec![0.5] }
    }
}

fn default_dataset_size() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional label prefixed to run identifiers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub task: TaskName,
    #[serde(default = "default_dataset_size")]
    pub dataset_size: usize,
    /// Master seed; see `sparsetrain_core::seed` for the stream scheme.
    #[serde(default)]
    pub seed: u64,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sparsity: Vec<f64>,
    /// Layer indices never pruned or trimmed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub ump: UmpSection,
    #[serde(default)]
    pub imp: ImpSection,
    #[serde(default)]
    pub parp: ParpSection,
    #[serde(default)]
    pub foresight: ForesightSection,
    #[serde(default)]
    pub dynamic: DynamicSection,
    #[serde(default)]
    pub trim: TrimSection,
    #[serde(default)]
    pub svd: SvdSection,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub method: Option<Method>,
    pub sparsity: Option<Vec<f64>>,
}

fn check(ok: bool, field: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(HarnessError::config(field, message()))
    }
}

fn unit_interval(field: &str, v: f64, closed_top: bool) -> Result<()> {
    let ok = if closed_top { (0.0..=1.0).contains(&v) } else { (0.0..1.0).contains(&v) };
    check(ok, field, || format!("{v} is outside [0, 1{}", if closed_top { "]" } else { ")" }))
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(task: TaskName, method: Method) -> Self {
        ExperimentConfig {
            name: None,
            task,
            dataset_size: default_dataset_size(),
            seed: 0,
            method,
            sparsity: Vec::new(),
            exclude: Vec::new(),
            out: None,
            network: NetworkSection::default(),
            train: TrainSection::default(),
            ump: UmpSection::default(),
            imp: ImpSection::default(),
            parp: ParpSection::default(),
            foresight: ForesightSection::default(),
            dynamic: DynamicSection::default(),
            trim: TrimSection::default(),
            svd: SvdSection::default(),
        }
    }

    /// Parses without validating.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    /// Parses, applies overrides and validates.
    pub fn from_toml(text: &str, overrides: &Overrides) -> Result<Self> {
        let mut c = Self::parse(text)?;
        c.apply(overrides);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(s) = &o.sparsity {
            self.sparsity = s.clone();
        }
    }

    pub fn layer_count(&self) -> usize {
        self.network.hidden.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        check(self.seed <= i64::MAX as u64, "seed", || format!("{} does not fit a TOML integer", self.seed))?;
        check(self.dataset_size >= 10, "dataset_size", || {
            format!("{} samples cannot be split 80:10:10", self.dataset_size)
        })?;
        check(self.network.hidden.iter().all(|&w| w > 0), "network.hidden", || "widths must be positive".into())?;
        let n_layers = self.layer_count();
        for &e in &self.exclude {
            check(e < n_layers, "exclude", || format!("layer {e} does not exist ({n_layers} layers)"))?;
        }
        check(self.exclude.iter().collect::<BTreeSet<_>>().len() == self.exclude.len(), "exclude", || {
            "duplicate layer index".into()
        })?;

        let t = &self.train;
        check(t.learning_rate.is_finite() && t.learning_rate >= 0.0, "train.learning_rate", || {
            format!("{} is not a finite non-negative rate", t.learning_rate)
        })?;
        check(t.batch_size > 0, "train.batch_size", || "must be positive".into())?;
        check(t.steps > 0, "train.steps", || "must be positive".into())?;
        check(t.eval_every > 0, "train.eval_every", || "must be positive".into())?;
        check(t.patience != Some(0), "train.patience", || "must be positive when set".into())?;
        unit_interval("train.momentum", t.momentum, false)?;
        unit_interval("train.beta1", t.beta1, false)?;
        unit_interval("train.beta2", t.beta2, false)?;
        check(t.eps > 0.0, "train.eps", || "must be positive".into())?;
        if let Some(d) = t.lr_decay {
            check(d.every > 0, "train.lr_decay.every", || "must be positive".into())?;
            check(d.factor > 0.0 && d.factor.is_finite(), "train.lr_decay.factor", || "must be positive".into())?;
        }

        if self.method.uses_sparsity() {
            check(!self.sparsity.is_empty(), "sparsity", || format!("method `{}` needs a grid", self.method.name()))?;
        } else {
            check(self.sparsity.is_empty(), "sparsity", || {
                format!("method `{}` does not take a sparsity grid", self.method.name())
            })?;
        }
        for &s in &self.sparsity {
            unit_interval("sparsity", s, false)?;
            if self.method == Method::Trim {
                check(s > 0.0, "sparsity", || "trim targets must be positive".into())?;
            }
        }

        unit_interval("imp.initial", self.imp.initial, false)?;
        check(self.imp.phases > 0, "imp.phases", || "must be positive".into())?;
        check(self.imp.phase_steps != Some(0), "imp.phase_steps", || "must be positive when set".into())?;
        check(self.parp.adjust_epochs > 0, "parp.adjust_epochs", || "must be positive".into())?;
        check(self.parp.learning_rate.is_finite() && self.parp.learning_rate >= 0.0, "parp.learning_rate", || {
            "must be a finite non-negative rate".into()
        })?;
        check(self.foresight.batch_size > 0, "foresight.batch_size", || "must be positive".into())?;
        check(self.foresight.subset != Some(0), "foresight.subset", || "must be positive when set".into())?;
        unit_interval("dynamic.prune_rate", self.dynamic.prune_rate, true)?;
        unit_interval("dynamic.beta", self.dynamic.beta, false)?;
        check(self.dynamic.decay > 0.0 && self.dynamic.decay <= 1.0, "dynamic.decay", || "must be in (0, 1]".into())?;
        check(self.dynamic.interval > 0, "dynamic.interval", || "must be positive".into())?;
        let q = &self.trim.quota_source;
        check(q.is_empty() || q.len() == self.sparsity.len(), "trim.quota_source", || {
            format!("{} entries for {} sparsity values", q.len(), self.sparsity.len())
        })?;
        for &v in q {
            check(v > 0.0 && v < 1.0, "trim.quota_source", || format!("{v} is outside (0, 1)"))?;
        }
        check(!self.svd.rank_fraction.is_empty(), "svd.rank_fraction", || "needs at least one value".into())?;
        for &r in &self.svd.rank_fraction {
            check(r > 0.0 && r <= 1.0, "svd.rank_fraction", || format!("{r} is outside (0, 1]"))?;
        }
        Ok(())
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let task = self.task.task();
        let act = match self.network.activation {
            Activation::Relu => Nonlinearity::Relu,
            Activation::Tanh => Nonlinearity::Tanh,
        };
        let mut specs = Vec::with_capacity(self.layer_count());
        let mut prev = task.input_dim();
        for &h in &self.network.hidden {
            specs.push(LayerSpec::dense(prev, h, act));
            prev = h;
        }
        specs.push(LayerSpec::output(prev, task.output_dim()));
        specs
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            optimizer: match t.optimizer {
                OptimizerName::Adam => Optimizer::Adam { beta1: t.beta1, beta2: t.beta2, eps: t.eps },
                OptimizerName::SgdMomentum => Optimizer::SgdMomentum { momentum: t.momentum },
            },
            learning_rate: t.learning_rate,
            schedule: match t.lr_decay {
                Some(d) => LrSchedule::StepDecay { every: d.every, factor: d.factor },
                None => LrSchedule::Constant,
            },
            batch_size: t.batch_size,
            steps: t.steps,
            eval_every: t.eval_every,
            patience: t.patience,
            seed: self.seed,
            mask_policy: MaskPolicy::FrozenZero,
        }
    }

    pub fn parp_config(&self) -> ParpConfig {
        ParpConfig { adjust_epochs: self.parp.adjust_epochs, learning_rate: self.parp.learning_rate }
    }

    pub fn dynamic_config(&self) -> DynamicPruneConfig {
        let d = &self.dynamic;
        DynamicPruneConfig { prune_rate: d.prune_rate, beta: d.beta, decay: d.decay, interval: d.interval }
    }

    pub fn foresight_config(&self) -> ForesightConfig {
        let policy = if self.method == Method::Grasp { KeepPolicy::Smallest } else { KeepPolicy::Largest };
        ForesightConfig { batch_size: self.foresight.batch_size, subset: self.foresight.subset, policy }
    }

    /// One single-point config per grid entry, each with its run identifier.
    pub fn expand(&self) -> Vec<RunSpec> {
        let prefix = self.name.as_deref().map(|n| format!("{n}-")).unwrap_or_default();
        let method = self.method.name();
        match self.method {
            Method::Dense => vec![RunSpec { id: format!("{prefix}{method}"), config: self.clone() }],
            Method::Svd => self
                .svd
                .rank_fraction
                .iter()
                .map(|&r| {
                    let mut c = self.clone();
                    c.svd.rank_fraction = vec![r];
                    RunSpec { id: format!("{prefix}{method}-r{}", percent(r)), config: c }
                })
                .collect(),
            _ => self
                .sparsity
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    let mut c = self.clone();
                    c.sparsity = vec![s];
                    if let Some(&q) = self.trim.quota_source.get(i) {
                        c.trim.quota_source = vec![q];
                    }
                    RunSpec { id: format!("{prefix}{method}-{}", percent(s)), config: c }
                })
                .collect(),
        }
    }

    /// The single grid point of an expanded config.
    pub fn point(&self) -> Option<f64> {
        match self.method {
            Method::Dense => None,
            Method::Svd => self.svd.rank_fraction.first().copied(),
            _ => self.sparsity.first().copied(),
        }
    }
}

/// `0.2 → "20"`, `0.125 → "12.5"`.
fn percent(v: f64) -> String {
    let p = (v * 1e6).round() / 1e4;
    let s = format!("{p}");
    s.trim_end_matches(".0").to_string()
}

/// One concrete run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub id: String,
    pub config: ExperimentConfig,
}

/// A list of experiment configs sharing defaults.
///
/// ```toml
/// [defaults]
/// task = "two-class-spiral"
///
/// [[runs]]
/// method = "dense"
///
/// [[runs]]
/// method = "ump"
/// sparsity = [0.2, 0.4]
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub experiments: Vec<ExperimentConfig>,
}

fn merge(base: &toml::Table, over: &toml::Table) -> toml::Table {
    let mut out = base.clone();
    for (k, v) in over {
        match (out.get(k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => {
                let merged = merge(a, b);
                out.insert(k.clone(), toml::Value::Table(merged));
            }
            _ => {
                out.insert(k.clone(), v.clone());
            }
        }
    }
    out
}

impl SweepConfig {
    pub fn from_toml(text: &str, overrides: &Overrides) -> Result<Self> {
        let mut root: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Parse(e.to_string()))?;
        let defaults = match root.remove("defaults") {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(HarnessError::config("defaults", "must be a table")),
            None => toml::Table::new(),
        };
        let runs = match root.remove("runs") {
            Some(toml::Value::Array(a)) => a,
            Some(_) => return Err(HarnessError::config("runs", "must be an array of tables")),
            None => return Err(HarnessError::config("runs", "a sweep needs at least one [[runs]] entry")),
        };
        if let Some(k) = root.keys().next() {
            return Err(HarnessError::config(k.as_str(), "unknown top-level key in a sweep file"));
        }
        let mut experiments = Vec::with_capacity(runs.len());
        for (i, r) in runs.into_iter().enumerate() {
            let toml::Value::Table(t) = r else {
                return Err(HarnessError::config(format!("runs[{i}]"), "must be a table"));
            };
            let mut c: ExperimentConfig = toml::Value::Table(merge(&defaults, &t))
                .try_into()
                .map_err(|e: toml::de::Error| HarnessError::Parse(format!("runs[{i}]: {e}")))?;
            c.apply(overrides);
            c.validate().map_err(|e| match e {
                HarnessError::Config { field, message } => {
                    HarnessError::Config { field: format!("runs[{i}].{field}"), message }
                }
                other => other,
            })?;
            experiments.push(c);
        }
        let first = &experiments[0];
        for (i, c) in experiments.iter().enumerate() {
            check(c.task == first.task, &format!("runs[{i}].task"), || "all runs of a sweep share one task".into())?;
            check(c.seed == first.seed, &format!("runs[{i}].seed"), || "all runs of a sweep share one seed".into())?;
        }
        Ok(SweepConfig { experiments })
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text, overrides)
    }

    /// Every run of the sweep. Repeated identifiers get a numeric suffix.
    pub fn expand(&self) -> Vec<RunSpec> {
        let mut seen = std::collections::BTreeMap::<String, usize>::new();
        let mut out = Vec::new();
        for c in &self.experiments {
            for mut r in c.expand() {
                let n = seen.entry(r.id.clone()).or_insert(0);
                *n += 1;
                if *n > 1 {
                    r.id = format!("{}-{}", r.id, n);
                }
                out.push(r);
            }
        }
        out
    }
}

/// Parses a comma-separated sparsity list such as `0.2,0.4`.
pub fn parse_sparsity_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| HarnessError::config("sparsity", format!("`{s}` is not a number")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "task = \"two-class-spiral\"\nmethod = \"ump\"\nsparsity = [0.2, 0.4]\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL, &Overrides::default()).unwrap();
        assert_eq!(c.network.hidden, vec![32, 32]);
        assert_eq!(c.dataset_size, 1000);
        assert_eq!(c.train.steps, 2000);
        assert_eq!(c.dynamic.prune_rate, 0.2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentConfig::parse(&format!("{MINIMAL}colour = 3\n")).unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
        let e = ExperimentConfig::parse(&format!("{MINIMAL}[train]\nsteps = 5\nspeed = 1\n")).unwrap_err();
        assert!(e.to_string().contains("speed"), "{e}");
    }

    #[test]
    fn validation_names_the_field() {
        let e = ExperimentConfig::from_toml(&MINIMAL.replace("0.4", "1.2"), &Overrides::default()).unwrap_err();
        assert!(matches!(&e, HarnessError::Config { field, .. } if field == "sparsity"), "{e}");
        let text = "task = \"two-class-spiral\"\nmethod = \"dense\"\n[train]\nbatch_size = 0\n";
        let e = ExperimentConfig::from_toml(text, &Overrides::default()).unwrap_err();
        assert!(matches!(&e, HarnessError::Config { field, .. } if field == "train.batch_size"), "{e}");
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn overrides_win() {
        let o = Overrides { seed: Some(9), sparsity: Some(vec![0.5]), method: Some(Method::Snip), out: None };
        let c = ExperimentConfig::from_toml(MINIMAL, &o).unwrap();
        assert_eq!((c.seed, c.method, c.sparsity.clone()), (9, Method::Snip, vec![0.5]));
    }

    #[test]
    fn expansion_ids() {
        let c = ExperimentConfig::from_toml(MINIMAL, &Overrides::default()).unwrap();
        let ids: Vec<String> = c.expand().into_iter().map(|r| r.id).collect();
        assert_eq!(ids, vec!["ump-20", "ump-40"]);
        assert_eq!(percent(0.125), "12.5");
        assert_eq!(percent(0.02), "2");
    }

    #[test]
    fn sweep_merges_defaults_and_checks_tasks() {
        let text = "[defaults]\ntask = \"two-class-spiral\"\n[defaults.train]\nsteps = 10\n\
                    [[runs]]\nmethod = \"dense\"\n[[runs]]\nmethod = \"ump\"\nsparsity = [0.2]\n[runs.train]\nbatch_size = 8\n";
        let s = SweepConfig::from_toml(text, &Overrides::default()).unwrap();
        assert_eq!(s.experiments.len(), 2);
        assert_eq!(s.experiments[1].train.steps, 10);
        assert_eq!(s.experiments[1].train.batch_size, 8);
        let bad = text.replace("method = \"dense\"", "method = \"dense\"\ntask = \"small-multiclass\"");
        assert!(SweepConfig::from_toml(&bad, &Overrides::default()).is_err());
    }
}
