//! Executes runs end to end and writes their artifacts.
//!
//! Each run owns its data, network and output directory, so runs can
//! proceed on separate threads with nothing shared but the work queue.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use sparsetrain_core::data::{make_dataset, DatasetSplit};
use sparsetrain_core::network::{compress_low_rank, Network};
use sparsetrain_core::saliency::{ProgressiveSchedule, SaliencyScores};
use sparsetrain_core::seed::{stream_seed, Stream};
use sparsetrain_core::train::{
    evaluate, grasp_train, imp_run, parp_run, rigl_train, snip_train, sparse_momentum_train, trim_run, ump_run,
    CycleReport, StepRecord, TrainConfig, TrainOutcome, Trainer,
};

use crate::checkpoint::{self, Checkpoint, Precision};
use crate::config::{ExperimentConfig, Method, RunSpec};
use crate::error::{HarnessError, Result};
use crate::report::{
    assemble_report, compare_sweep, CurvePoint, ExperimentReport, RunArtifacts, RunOutcome, SweepTable,
};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "SPARSETRAIN_OUT";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "comparison.csv";

/// Output root: explicit flag, then the config's `out`, then the
/// environment, then `runs`.
pub fn output_root(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Everything a finished run produced, before anything touches disk.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub report: ExperimentReport,
    pub checkpoint: Checkpoint,
    pub log: Vec<LogLine>,
}

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogLine {
    pub phase: String,
    pub step: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub learning_rate: f64,
    pub sparsity: f64,
    pub active: usize,
    pub nonzero: usize,
    pub wall_clock_ms: u64,
}

struct Recorder {
    start: Instant,
    lines: Vec<LogLine>,
}

impl Recorder {
    fn observer<'a>(&'a mut self, phase: &'a str) -> impl FnMut(&StepRecord) + 'a {
        move |r: &StepRecord| {
            let ms = self.start.elapsed().as_millis() as u64;
            self.lines.push(LogLine {
                phase: phase.to_string(),
                step: r.step,
                epoch: r.epoch,
                train_loss: r.train_loss,
                dev_loss: r.dev_loss,
                learning_rate: r.learning_rate,
                sparsity: r.sparsity,
                active: r.active,
                nonzero: r.nonzero,
                wall_clock_ms: ms,
            })
        }
    }

    fn curve(&self) -> Vec<CurvePoint> {
        self.lines
            .iter()
            .map(|l| CurvePoint {
                phase: l.phase.clone(),
                step: l.step,
                train_loss: l.train_loss,
                dev_loss: l.dev_loss,
                sparsity: l.sparsity,
                nonzero: l.nonzero,
            })
            .collect()
    }
}

/// What a method hands back to the common tail of [`execute`].
struct MethodResult {
    network: Network<f64>,
    scores: Option<SaliencyScores<f64>>,
    best_step: usize,
    total_steps: usize,
    extras: BTreeMap<String, f64>,
}

fn cycle_extras(extras: &mut BTreeMap<String, f64>, reports: &[CycleReport]) {
    extras.insert("cycles".into(), reports.len() as f64);
    let regrown: usize = reports.iter().map(|r| r.regrown.iter().sum::<usize>()).sum();
    extras.insert("regrown_total".into(), regrown as f64);
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    train_cfg: TrainConfig,
    data: &'a DatasetSplit<f64>,
}

impl Context<'_> {
    fn dense(&self, net: Network<f64>, rec: &mut Recorder) -> sparsetrain_core::Result<TrainOutcome<f64>> {
        let mut obs = rec.observer("dense");
        Trainer::new(&self.train_cfg, &self.data.train, &self.data.dev).with_observer(&mut obs).run(net)
    }

    fn target(&self) -> f64 {
        self.cfg.sparsity.first().copied().unwrap_or(0.0)
    }

    fn method(&self, net: Network<f64>, rec: &mut Recorder) -> sparsetrain_core::Result<MethodResult> {
        let (train, dev) = (&self.data.train, &self.data.dev);
        let cfg = self.cfg;
        let s = self.target();
        let mut extras = BTreeMap::new();
        let plain = |network, best_step, total_steps, extras| MethodResult {
            network,
            scores: None,
            best_step,
            total_steps,
            extras,
        };
        Ok(match cfg.method {
            Method::Dense => {
                let out = self.dense(net, rec)?;
                plain(out.best, out.best_step, out.steps_run, extras)
            }
            Method::Ump => {
                let base = self.dense(net, rec)?;
                let mut pruned = ump_run(&base.best, s)?;
                let mut total = base.steps_run;
                if cfg.ump.finetune_steps > 0 {
                    let ft_cfg = TrainConfig { steps: cfg.ump.finetune_steps, ..self.train_cfg.clone() };
                    let mut obs = rec.observer("finetune");
                    let ft = Trainer::new(&ft_cfg, train, dev).with_observer(&mut obs).run(pruned)?;
                    total += ft.steps_run;
                    pruned = ft.best;
                }
                plain(pruned, base.best_step, total, extras)
            }
            Method::Imp => {
                let phases = cfg.imp.phases;
                let schedule = ProgressiveSchedule::new(cfg.imp.initial.min(s), s, phases);
                let phase_cfg = TrainConfig {
                    steps: cfg.imp.phase_steps.unwrap_or((self.train_cfg.steps / phases).max(1)),
                    ..self.train_cfg.clone()
                };
                let mut obs = rec.observer("imp");
                let out = imp_run(net, train, dev, &schedule, &phase_cfg, &mut obs)?;
                extras.insert("phases".into(), out.phases.len() as f64);
                let total = out.phases.iter().map(|p| p.steps_run).sum();
                plain(out.network, out.phases[0].best_step, total, extras)
            }
            Method::Parp => {
                let base = self.dense(net, rec)?;
                let state = cfg.parp.keep_optimizer.then(|| base.optimizer.clone());
                let mut obs = rec.observer("adjust");
                let out = parp_run(&base.best, train, dev, s, &cfg.parp_config(), &self.train_cfg, state, &mut obs)?;
                extras.insert("revived".into(), out.revived as f64);
                extras.insert("mask_changes".into(), out.changed as f64);
                plain(out.network, base.best_step, base.steps_run + out.adjust.steps_run, extras)
            }
            Method::Snip | Method::Grasp => {
                let f = cfg.foresight_config();
                let mut obs = rec.observer(cfg.method.name());
                let out = if cfg.method == Method::Snip {
                    snip_train(net, train, dev, s, &self.train_cfg, &f, &mut obs)?
                } else {
                    grasp_train(net, train, dev, s, &self.train_cfg, &f, &mut obs)?
                };
                MethodResult {
                    network: out.outcome.best,
                    scores: Some(out.scores),
                    best_step: out.outcome.best_step,
                    total_steps: out.outcome.steps_run,
                    extras,
                }
            }
            Method::SparseMomentum | Method::Rigl => {
                let d = cfg.dynamic_config();
                let mut obs = rec.observer(cfg.method.name());
                let (out, reports) = if cfg.method == Method::Rigl {
                    rigl_train(net, train, dev, s, &self.train_cfg, &d, &mut obs)?
                } else {
                    sparse_momentum_train(net, train, dev, s, &self.train_cfg, &d, &mut obs)?
                };
                cycle_extras(&mut extras, &reports);
                plain(out.best, out.best_step, out.steps_run, extras)
            }
            Method::Trim => {
                let base = self.dense(net, rec)?;
                let dense_total = base.best.count_params().total as f64;
                let (trimmed, quota, source) = match cfg.trim.quota_source.first() {
                    Some(&q) => {
                        let (t, quota) = trim_run(&base.best, q)?;
                        (t, quota, q)
                    }
                    None => calibrate_trim(&base.best, s, dense_total)?,
                };
                extras.insert("quota_source".into(), source);
                extras.insert("neurons_removed".into(), quota.iter().sum::<usize>() as f64);
                plain(trimmed, base.best_step, base.steps_run, extras)
            }
            Method::Svd => {
                let base = self.dense(net, rec)?;
                let r = cfg.svd.rank_fraction[0];
                extras.insert("rank_fraction".into(), r);
                plain(compress_low_rank(&base.best, r)?, base.best_step, base.steps_run, extras)
            }
        })
    }
}

/// Smallest magnitude-pruning proxy, in steps of 0.01, whose trim removes
/// at least `target` of the stored parameters.
fn calibrate_trim(
    trained: &Network<f64>,
    target: f64,
    dense_total: f64,
) -> sparsetrain_core::Result<(Network<f64>, Vec<usize>, f64)> {
    let mut last = None;
    for i in 1..100 {
        let q = i as f64 / 100.0;
        let (t, quota) = trim_run(trained, q)?;
        let removed = 1.0 - t.count_params().total as f64 / dense_total;
        if removed + 1e-12 >= target {
            return Ok((t, quota, q));
        }
        last = Some((t, quota, q));
    }
    Ok(last.expect("loop runs"))
}

/// Runs one grid point in memory.
pub fn execute(spec: &RunSpec) -> Result<RunResult> {
    let cfg = &spec.config;
    let fail = |source| HarnessError::Run { run: spec.id.clone(), source };
    let start = Instant::now();
    let data =
        make_dataset::<f64>(cfg.task.task(), cfg.dataset_size, stream_seed(cfg.seed, Stream::Dataset)).map_err(fail)?;
    let net = Network::<f64>::build(&cfg.layer_specs(), stream_seed(cfg.seed, Stream::Init))
        .and_then(|n| n.with_exclusions(cfg.exclude.iter().copied()))
        .map_err(fail)?;
    let dense_params = net.count_params().total;
    let mut rec = Recorder { start, lines: Vec::new() };
    let ctx = Context { cfg, train_cfg: cfg.train_config(), data: &data };
    let m = ctx.method(net, &mut rec).map_err(fail)?;
    let eval = |d| evaluate(&m.network, d).map_err(fail);
    let (train, dev, test) = (eval(&data.train)?, eval(&data.dev)?, eval(&data.test)?);
    let report = assemble_report(RunArtifacts {
        run_id: Some(spec.id.clone()),
        config: Some(cfg.clone()),
        network: Some(m.network.clone()),
        dense_params: Some(dense_params),
        train: Some(train),
        dev: Some(dev),
        test: Some(test),
        best_step: Some(m.best_step),
        total_steps: Some(m.total_steps),
        wall_clock_seconds: Some(start.elapsed().as_secs_f64()),
        curve: Some(rec.curve()),
        extras: m.extras,
    })?;
    Ok(RunResult { report, checkpoint: Checkpoint { network: m.network, scores: m.scores }, log: rec.lines })
}

/// Writes a run's artifacts under `root/<run id>/`.
pub fn write_artifacts(root: &Path, result: &RunResult) -> Result<PathBuf> {
    let dir = root.join(&result.report.run_id);
    checkpoint::save(&dir.join(CHECKPOINT_FILE), &result.checkpoint, Precision::F64)?;
    let mut log = String::new();
    for l in &result.log {
        log.push_str(&serde_json::to_string(l).expect("log line serializes"));
        log.push('\n');
    }
    checkpoint::write_atomic(&dir.join(METRICS_FILE), log.as_bytes())?;
    result.report.save(&dir.join(REPORT_FILE))?;
    Ok(dir)
}

/// Executes and writes one run.
pub fn run(spec: &RunSpec, root: &Path) -> Result<ExperimentReport> {
    let result = execute(spec)?;
    write_artifacts(root, &result)?;
    Ok(result.report)
}

/// Runs every spec on up to `jobs` threads. Outcomes keep the input order,
/// and a failed run never stops the others.
pub fn run_all(specs: &[RunSpec], root: &Path, jobs: usize) -> Vec<RunOutcome> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RunOutcome>>> = Mutex::new(vec![None; specs.len()]);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(spec) = specs.get(i) else { break };
        let outcome = match run(spec, root) {
            Ok(r) => RunOutcome::Completed(Box::new(r)),
            Err(e) => RunOutcome::Failed {
                run_id: spec.id.clone(),
                method: spec.config.method.name().to_string(),
                target: spec.config.point(),
                error: e.to_string(),
            },
        };
        slots.lock().expect("no panics while holding the lock")[i] = Some(outcome);
    };
    let threads = jobs.clamp(1, specs.len().max(1));
    if threads == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(worker);
            }
        });
    }
    slots.into_inner().expect("workers finished").into_iter().map(|o| o.expect("every run visited")).collect()
}

/// Runs a sweep and writes the comparison table to `root/comparison.csv`.
pub fn sweep(specs: &[RunSpec], root: &Path, jobs: usize) -> Result<(Vec<RunOutcome>, SweepTable)> {
    let outcomes = run_all(specs, root, jobs);
    let table = compare_sweep(&outcomes)?;
    checkpoint::write_atomic(&root.join(TABLE_FILE), table.to_csv().as_bytes())?;
    Ok((outcomes, table))
}

/// Reports stored under `root`, ordered by run directory name.
pub fn load_reports(root: &Path) -> Result<Vec<ExperimentReport>> {
    let entries = std::fs::read_dir(root).map_err(|e| HarnessError::io(root, e))?;
    let mut paths: Vec<PathBuf> =
        entries.filter_map(|e| e.ok()).map(|e| e.path().join(REPORT_FILE)).filter(|p| p.is_file()).collect();
    paths.sort();
    paths.iter().map(|p| ExperimentReport::load(p)).collect()
}
