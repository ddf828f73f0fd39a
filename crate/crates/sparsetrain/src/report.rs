//! Per-run reports and the sweep comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sparsetrain_core::network::{Network, ParamCount};
use sparsetrain_core::saliency::keep_count;
use sparsetrain_core::sizing::{network_storage, StorageFormat};
use sparsetrain_core::train::{Metrics, StepRecord};

use crate::checkpoint::write_atomic;
use crate::config::{ExperimentConfig, Method};
use crate::error::{HarnessError, Result};

/// Float width assumed for stored weights.
pub const ELEMENT_BYTES: u64 = 4;
/// Index width for COO; with 4-byte values it breaks even at 80% sparsity.
pub const COO_INDEX_BYTES: u64 = 8;
pub const CSR_INDEX_BYTES: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    /// Stored parameters including biases.
    pub total: usize,
    /// Stored parameters that are unmasked and nonzero.
    pub nonzero: usize,
    /// Weights eligible for masking.
    pub maskable: usize,
    /// Maskable weights with mask entry 1.
    pub active: usize,
    /// Fraction of maskable weights masked out.
    pub sparsity: f64,
    /// `sparsity` as an exact ratio, e.g. `"410/2048"`.
    pub sparsity_exact: String,
}

impl From<ParamCount> for ParamSummary {
    fn from(p: ParamCount) -> Self {
        ParamSummary {
            total: p.total,
            nonzero: p.nonzero,
            maskable: p.maskable,
            active: p.active,
            sparsity: p.sparsity.as_f64(),
            sparsity_exact: format!("{}/{}", p.sparsity.numer(), p.sparsity.denom()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageRow {
    pub format: String,
    pub element_bytes: u64,
    pub index_bytes: u64,
    pub bytes: u64,
    /// Weight sparsity at which this format matches dense storage, for the
    /// largest layer.
    pub break_even: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
}

impl From<Metrics> for SplitMetrics {
    fn from(m: Metrics) -> Self {
        SplitMetrics { loss: m.loss, accuracy: m.accuracy }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Training phase the point belongs to, e.g. `"dense"` or `"adjust"`.
    pub phase: String,
    pub step: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub sparsity: f64,
    pub nonzero: usize,
}

impl CurvePoint {
    pub fn from_record(phase: &str, r: &StepRecord) -> Self {
        CurvePoint {
            phase: phase.to_string(),
            step: r.step,
            train_loss: r.train_loss,
            dev_loss: r.dev_loss,
            sparsity: r.sparsity,
            nonzero: r.nonzero,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub run_id: String,
    pub task: String,
    pub method: String,
    pub seed: u64,
    pub target_sparsity: Option<f64>,
    pub achieved_sparsity: f64,
    /// `1 − total / dense_total`: physical reduction in stored parameters.
    pub size_reduction: f64,
    pub params: ParamSummary,
    pub dense_params: usize,
    pub storage: Vec<StorageRow>,
    pub train: SplitMetrics,
    pub dev: SplitMetrics,
    pub test: SplitMetrics,
    /// Optimizer steps from initialization to the best dev checkpoint.
    pub best_step: usize,
    /// Optimizer steps executed across all phases.
    pub total_steps: usize,
    pub wall_clock_seconds: f64,
    pub curve: Vec<CurvePoint>,
    /// Method-specific numbers such as PARP's revived count.
    pub extras: BTreeMap<String, f64>,
    pub config: ExperimentConfig,
}

/// What a finished run hands to [`assemble_report`]. Every field must be
/// set.
#[derive(Clone, Debug, Default)]
pub struct RunArtifacts {
    pub run_id: Option<String>,
    pub config: Option<ExperimentConfig>,
    pub network: Option<Network<f64>>,
    pub dense_params: Option<usize>,
    pub train: Option<Metrics>,
    pub dev: Option<Metrics>,
    pub test: Option<Metrics>,
    pub best_step: Option<usize>,
    pub total_steps: Option<usize>,
    pub wall_clock_seconds: Option<f64>,
    pub curve: Option<Vec<CurvePoint>>,
    pub extras: BTreeMap<String, f64>,
}

fn need<T>(v: Option<T>, field: &'static str) -> Result<T> {
    v.ok_or(HarnessError::MissingField(field))
}

fn storage_rows(net: &Network<f64>) -> Result<Vec<StorageRow>> {
    let formats =
        [(StorageFormat::Dense, 0), (StorageFormat::Coo, COO_INDEX_BYTES), (StorageFormat::Csr, CSR_INDEX_BYTES)];
    formats
        .into_iter()
        .map(|(format, index)| {
            let s =
                network_storage(net, format, ELEMENT_BYTES, index).map_err(|e| HarnessError::Report(e.to_string()))?;
            let largest = s.per_layer.iter().zip(net.layers()).max_by_key(|(_, l)| l.weight.len()).map(|(e, _)| e);
            Ok(StorageRow {
                format: format.name().to_string(),
                element_bytes: ELEMENT_BYTES,
                index_bytes: index,
                bytes: s.total_bytes,
                break_even: largest.and_then(|e| e.break_even).map(|f| f.as_f64()),
            })
        })
        .collect()
}

fn masks_by_sparsity(method: Method) -> bool {
    !matches!(method, Method::Dense | Method::Trim | Method::Svd)
}

/// Builds the report, checking that every artifact is present and that a
/// masking method hit its target to within one weight.
pub fn assemble_report(a: RunArtifacts) -> Result<ExperimentReport> {
    let run_id = need(a.run_id, "run_id")?;
    let config = need(a.config, "config")?;
    let net = need(a.network, "network")?;
    let dense_params = need(a.dense_params, "dense_params")?;
    let train = need(a.train, "train")?;
    let dev = need(a.dev, "dev")?;
    let test = need(a.test, "test")?;
    let best_step = need(a.best_step, "best_step")?;
    let total_steps = need(a.total_steps, "total_steps")?;
    let wall_clock_seconds = need(a.wall_clock_seconds, "wall_clock_seconds")?;
    let curve = need(a.curve, "curve")?;

    let params = net.count_params();
    let target = config.method.uses_sparsity().then(|| config.sparsity.first().copied()).flatten();
    if masks_by_sparsity(config.method) {
        let s = target.ok_or(HarnessError::MissingField("target_sparsity"))?;
        let expect = keep_count(s, params.maskable);
        if params.active.abs_diff(expect) > 1 {
            return Err(HarnessError::Report(format!(
                "run `{run_id}`: {} active weights, expected {expect} at sparsity {s}",
                params.active
            )));
        }
    }
    for (name, m) in [("train", &train), ("dev", &dev), ("test", &test)] {
        if !m.loss.is_finite() {
            return Err(HarnessError::Report(format!("run `{run_id}`: {name} loss is not finite")));
        }
    }
    Ok(ExperimentReport {
        task: config.task.task().name().to_string(),
        method: config.method.name().to_string(),
        seed: config.seed,
        target_sparsity: target,
        achieved_sparsity: params.sparsity.as_f64(),
        size_reduction: 1.0 - params.total as f64 / dense_params as f64,
        storage: storage_rows(&net)?,
        params: params.into(),
        dense_params,
        train: train.into(),
        dev: dev.into(),
        test: test.into(),
        best_step,
        total_steps,
        wall_clock_seconds,
        curve,
        extras: a.extras,
        run_id,
        config,
    })
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Report(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text).map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))
    }

    /// The report with machine-dependent timing zeroed, for comparisons.
    pub fn without_timing(&self) -> Self {
        ExperimentReport { wall_clock_seconds: 0.0, ..self.clone() }
    }

    fn bytes_of(&self, format: &str) -> u64 {
        self.storage.iter().find(|s| s.format == format).map_or(0, |s| s.bytes)
    }

    /// Quality metric shown in tables: test accuracy for classification,
    /// test loss otherwise.
    pub fn quality(&self) -> f64 {
        self.test.accuracy.unwrap_or(self.test.loss)
    }
}

/// Result of one sweep entry.
#[derive(Clone, Debug)]
pub enum RunOutcome {
    Completed(Box<ExperimentReport>),
    Failed { run_id: String, method: String, target: Option<f64>, error: String },
}

impl RunOutcome {
    pub fn run_id(&self) -> &str {
        match self {
            RunOutcome::Completed(r) => &r.run_id,
            RunOutcome::Failed { run_id, .. } => run_id,
        }
    }
}

pub const CSV_HEADER: [&str; 18] = [
    "run_id",
    "method",
    "target_sparsity",
    "achieved_sparsity",
    "size_reduction",
    "params_total",
    "params_nonzero",
    "dense_bytes",
    "coo_bytes",
    "csr_bytes",
    "train_loss",
    "dev_loss",
    "test_loss",
    "test_accuracy",
    "best_step",
    "total_steps",
    "wall_clock_seconds",
    "status",
];

/// One row of the comparison table. Failed runs keep their identity and
/// leave every metric empty.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub cells: Vec<String>,
}

/// Comparison table over a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub task: String,
    pub rows: Vec<TableRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Tabulates the outcomes in input order. Completed reports must share a
/// task and carry finite metrics.
pub fn compare_sweep(outcomes: &[RunOutcome]) -> Result<SweepTable> {
    if outcomes.is_empty() {
        return Err(HarnessError::Report("no runs to compare".into()));
    }
    let mut task: Option<&str> = None;
    let mut rows = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let cells = match o {
            RunOutcome::Completed(r) => {
                match task {
                    None => task = Some(&r.task),
                    Some(t) if t != r.task => {
                        return Err(HarnessError::Report(format!(
                            "run `{}` is on task `{}` but the sweep is on `{t}`",
                            r.run_id, r.task
                        )))
                    }
                    _ => {}
                }
                let metrics = [
                    ("achieved_sparsity", Some(r.achieved_sparsity)),
                    ("size_reduction", Some(r.size_reduction)),
                    ("train_loss", Some(r.train.loss)),
                    ("dev_loss", Some(r.dev.loss)),
                    ("test_loss", Some(r.test.loss)),
                    ("test_accuracy", r.test.accuracy),
                ];
                for (name, v) in metrics {
                    if v.is_some_and(|x| !x.is_finite()) {
                        return Err(HarnessError::Report(format!("run `{}` has no valid `{name}`", r.run_id)));
                    }
                }
                vec![
                    r.run_id.clone(),
                    r.method.clone(),
                    opt(r.target_sparsity),
                    format!("{}", r.achieved_sparsity),
                    format!("{}", r.size_reduction),
                    r.params.total.to_string(),
                    r.params.nonzero.to_string(),
                    r.bytes_of("dense").to_string(),
                    r.bytes_of("coo").to_string(),
                    r.bytes_of("csr").to_string(),
                    format!("{}", r.train.loss),
                    format!("{}", r.dev.loss),
                    format!("{}", r.test.loss),
                    opt(r.test.accuracy),
                    r.best_step.to_string(),
                    r.total_steps.to_string(),
                    format!("{:.3}", r.wall_clock_seconds),
                    "ok".into(),
                ]
            }
            RunOutcome::Failed { run_id, method, target, .. } => {
                let mut c = vec![String::new(); CSV_HEADER.len()];
                c[0] = run_id.clone();
                c[1] = method.clone();
                c[2] = opt(*target);
                c[17] = "failed".into();
                c
            }
        };
        rows.push(TableRow { cells });
    }
    Ok(SweepTable { task: task.unwrap_or("").to_string(), rows })
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record(&r.cells).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.cells[17] == "failed").count()
    }

    /// Fixed-width text rendering of the main columns.
    pub fn render(&self) -> String {
        const COLS: [(usize, &str); 9] = [
            (0, "run"),
            (2, "target"),
            (3, "sparsity"),
            (5, "params"),
            (6, "nonzero"),
            (8, "coo B"),
            (12, "test loss"),
            (13, "test acc"),
            (14, "best step"),
        ];
        let short = |s: &str| match s.parse::<f64>() {
            Ok(v) if s.contains('.') => format!("{v:.4}"),
            _ => s.to_string(),
        };
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                COLS.iter()
                    .map(|&(i, _)| {
                        if i == 0 || r.cells[17] == "failed" && i != 2 {
                            r.cells[i].clone()
                        } else {
                            short(&r.cells[i])
                        }
                    })
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = COLS
            .iter()
            .enumerate()
            .map(|(j, (_, h))| cells.iter().map(|r| r[j].len()).chain([h.len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, vals: Vec<&str>, status: &str| {
            let parts: Vec<String> = vals.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
            let _ = writeln!(out, "{}  {status}", parts.join("  ").trim_end());
        };
        line(&mut out, COLS.iter().map(|c| c.1).collect(), "status");
        for (r, c) in self.rows.iter().zip(&cells) {
            line(&mut out, c.iter().map(String::as_str).collect(), &r.cells[17]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sweep_is_an_error() {
        assert!(compare_sweep(&[]).is_err());
    }

    #[test]
    fn failed_rows_are_marked() {
        let t = compare_sweep(&[RunOutcome::Failed {
            run_id: "ump-20".into(),
            method: "ump".into(),
            target: Some(0.2),
            error: "boom".into(),
        }])
        .unwrap();
        assert_eq!(t.failed(), 1);
        assert!(t.to_csv().lines().nth(1).unwrap().starts_with("ump-20,ump,0.2,"));
    }
}
