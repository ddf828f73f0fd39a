//! End-to-end runs through the harness: artifacts, reports, sweeps and the
//! command line.

use std::path::Path;

use sparsetrain::checkpoint;
use sparsetrain::cli::run_with;
use sparsetrain::config::{ExperimentConfig, Method, Overrides, RunSpec, TaskName};
use sparsetrain::report::{assemble_report, compare_sweep, RunArtifacts, RunOutcome, CSV_HEADER};
use sparsetrain::runner::{execute, run, run_all, CHECKPOINT_FILE, METRICS_FILE, REPORT_FILE};
use sparsetrain::HarnessError;
use sparsetrain_core::saliency::keep_count;

fn small(task: TaskName, method: Method, sparsity: &[f64]) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(task, method);
    c.dataset_size = 200;
    c.seed = 5;
    c.sparsity = sparsity.to_vec();
    c.network.hidden = vec![12, 12];
    c.train.steps = 120;
    c.train.eval_every = 20;
    c.validate().unwrap();
    c
}

fn one(c: &ExperimentConfig) -> RunSpec {
    let mut runs = c.expand();
    assert_eq!(runs.len(), 1);
    runs.remove(0)
}

#[test]
fn dense_run_writes_artifacts_and_learns() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(TaskName::TwoClassSpiral, Method::Dense, &[]);
    c.dataset_size = 1000;
    c.network.hidden = vec![32, 32];
    c.train.steps = 500;
    let report = run(&one(&c), dir.path()).unwrap();
    assert_eq!(report.achieved_sparsity, 0.0);
    assert_eq!(report.params.nonzero, report.params.total);
    let first = report.curve.first().unwrap().dev_loss;
    let best = report.curve.iter().map(|p| p.dev_loss).fold(f64::INFINITY, f64::min);
    assert!(best < first, "dev loss never improved: {first} -> {best}");
    assert!((report.dev.loss - best).abs() < 1e-12, "the best checkpoint is evaluated");
    // dense storage is the cheapest format for a dense model
    let dense = report.storage.iter().find(|s| s.format == "dense").unwrap().bytes;
    assert!(report.storage.iter().all(|s| s.bytes >= dense));

    let run_dir = dir.path().join("dense");
    for f in [CHECKPOINT_FILE, METRICS_FILE, REPORT_FILE] {
        assert!(run_dir.join(f).is_file(), "{f} missing");
    }
    let ck = checkpoint::load(&run_dir.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ck.network.count_params().total, report.params.total);
    let log = std::fs::read_to_string(run_dir.join(METRICS_FILE)).unwrap();
    assert_eq!(log.lines().count(), report.curve.len());
    assert!(log.lines().all(|l| l.contains("wall_clock_ms")));
}

#[test]
fn ump_grid_gives_six_reports_at_their_targets() {
    let dir = tempfile::tempdir().unwrap();
    let grid = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let c = small(TaskName::SmallMulticlass, Method::Ump, &grid);
    let outcomes = run_all(&c.expand(), dir.path(), 3);
    assert_eq!(outcomes.len(), 6);
    for (o, s) in outcomes.iter().zip(grid) {
        let RunOutcome::Completed(r) = o else { panic!("run failed: {o:?}") };
        assert_eq!(r.target_sparsity, Some(s));
        assert_eq!(r.params.active, keep_count(s, r.params.maskable));
        assert!((r.achieved_sparsity - s).abs() <= 1.0 / r.params.maskable as f64);
    }
    let table = compare_sweep(&outcomes).unwrap();
    assert_eq!(table.rows.len(), 6);
    assert_eq!(table.to_csv().lines().next().unwrap(), CSV_HEADER.join(","));
}

#[test]
fn trimmed_checkpoints_shrink_with_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(TaskName::TwoClassSpiral, Method::Trim, &[0.02, 0.04]);
    // wide enough that one neuron is under 4% of the parameters
    c.network.hidden = vec![32, 32];
    let outcomes = run_all(&c.expand(), dir.path(), 1);
    let totals: Vec<usize> = outcomes
        .iter()
        .map(|o| {
            let RunOutcome::Completed(r) = o else { panic!("{o:?}") };
            assert!(r.size_reduction >= r.target_sparsity.unwrap());
            let ck = checkpoint::load(&dir.path().join(&r.run_id).join(CHECKPOINT_FILE)).unwrap();
            ck.network.count_params().total
        })
        .collect();
    let dense = outcomes
        .iter()
        .map(|o| match o {
            RunOutcome::Completed(r) => r.dense_params,
            _ => unreachable!(),
        })
        .next()
        .unwrap();
    assert!(dense > totals[0] && totals[0] > totals[1], "{dense} {totals:?}");
}

#[test]
fn excluded_layers_keep_full_masks_for_every_method() {
    let dir = tempfile::tempdir().unwrap();
    for method in Method::ALL {
        let sparsity: &[f64] = match method {
            Method::Dense | Method::Svd => &[],
            Method::Trim => &[0.04],
            _ => &[0.4],
        };
        let mut c = small(TaskName::SmallMulticlass, method, sparsity);
        c.exclude = vec![0, 2];
        c.train.steps = 60;
        let r = run(&one(&c), dir.path()).unwrap();
        let ck = checkpoint::load(&dir.path().join(&r.run_id).join(CHECKPOINT_FILE)).unwrap();
        if method == Method::Svd {
            continue; // factor layers replace the originals
        }
        for l in [0, 2] {
            assert!(ck.network.layer(l).mask.is_all_ones(), "{}: layer {l}", method.name());
        }
        if method == Method::Trim {
            assert_eq!(ck.network.layer(0).spec.fan_out, 12, "excluded layer was trimmed");
        }
    }
}

#[test]
fn repeated_runs_give_identical_reports() {
    for method in [Method::Parp, Method::Snip, Method::Grasp, Method::Rigl, Method::SparseMomentum, Method::Imp] {
        let spec = one(&small(TaskName::SyntheticRegression, method, &[0.3]));
        let a = execute(&spec).unwrap();
        let b = execute(&spec).unwrap();
        assert_eq!(a.report.without_timing().to_json(), b.report.without_timing().to_json(), "{}", method.name());
        assert_eq!(
            checkpoint::encode(&a.checkpoint, checkpoint::Precision::F64),
            checkpoint::encode(&b.checkpoint, checkpoint::Precision::F64)
        );
    }
}

#[test]
fn config_echo_reproduces_the_run() {
    let spec = one(&small(TaskName::TwoClassSpiral, Method::Snip, &[0.2]));
    let first = execute(&spec).unwrap().report;
    let echoed = ExperimentConfig::from_toml(&first.config.to_toml(), &Overrides::default()).unwrap();
    let again = execute(&RunSpec { id: spec.id.clone(), config: echoed }).unwrap().report;
    assert_eq!(first.without_timing(), again.without_timing());
}

#[test]
fn report_json_round_trips_byte_for_byte() {
    let r = execute(&one(&small(TaskName::SmallMulticlass, Method::Ump, &[0.2]))).unwrap().report;
    let text = r.to_json();
    let back = sparsetrain::report::ExperimentReport::from_json(&text).unwrap();
    assert_eq!(back.to_json(), text);
}

#[test]
fn missing_artifacts_are_named() {
    let e = assemble_report(RunArtifacts::default()).unwrap_err();
    assert!(matches!(e, HarnessError::MissingField("run_id")));
    let e = assemble_report(RunArtifacts { run_id: Some("x".into()), ..Default::default() }).unwrap_err();
    assert!(matches!(e, HarnessError::MissingField("config")));
}

#[test]
fn comparisons_reject_mixed_tasks_and_bad_metrics() {
    let a = execute(&one(&small(TaskName::SmallMulticlass, Method::Dense, &[]))).unwrap().report;
    let b = execute(&one(&small(TaskName::TwoClassSpiral, Method::Dense, &[]))).unwrap().report;
    let e =
        compare_sweep(&[RunOutcome::Completed(Box::new(a.clone())), RunOutcome::Completed(Box::new(b))]).unwrap_err();
    assert!(e.to_string().contains("task"), "{e}");

    let mut broken = a.clone();
    broken.run_id = "broken-run".into();
    broken.test.loss = f64::NAN;
    let e = compare_sweep(&[RunOutcome::Completed(Box::new(a.clone())), RunOutcome::Completed(Box::new(broken))])
        .unwrap_err();
    assert!(e.to_string().contains("broken-run"), "{e}");

    let t = compare_sweep(&[RunOutcome::Completed(Box::new(a))]).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows[0].cells[3], "0");
}

fn cli(args: &[&str]) -> (u8, String) {
    let mut out = Vec::new();
    let code = run_with(std::iter::once("sparsetrain").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_RUN: &str = "task = \"small-multiclass\"\ndataset_size = 100\nmethod = \"ump\"\nsparsity = [0.2, 0.4]\n\
                         [network]\nhidden = [8]\n[train]\nsteps = 40\neval_every = 10\n";

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_string_lossy().into_owned();
    let good = write(dir.path(), "good.toml", SMALL_RUN);
    let (code, table) = cli(&["run", "--config", &good, "--out", &out_s]);
    assert_eq!(code, 0);
    assert!(table.contains("ump-20") && table.contains("ump-40"), "{table}");
    assert!(out.join("comparison.csv").is_file());

    // flags override the file
    let (code, table) =
        cli(&["run", "--config", &good, "--out", &out_s, "--method", "snip", "--sparsity", "0.5", "--seed", "3"]);
    assert_eq!(code, 0);
    assert!(table.contains("snip-50"), "{table}");

    let (code, csv) = cli(&["report", "--out", &out_s, "--csv"]);
    assert_eq!(code, 0);
    assert_eq!(csv.lines().count(), 4, "{csv}");

    let bad = write(dir.path(), "bad.toml", &format!("{SMALL_RUN}speed = 3\n"));
    assert_eq!(cli(&["run", "--config", &bad]).0, 1);
    let invalid = write(dir.path(), "invalid.toml", &SMALL_RUN.replace("0.4", "1.5"));
    assert_eq!(cli(&["run", "--config", &invalid]).0, 1);
    assert_eq!(cli(&["run", "--config", &good, "--method", "prune-everything"]).0, 1);
    assert_eq!(cli(&["run", "--config", &good, "--sparsity", "lots"]).0, 1);
    assert_eq!(cli(&["launch"]).0, 1);
    assert_eq!(cli(&["--help"]).0, 0);
    assert_eq!(cli(&["run", "--config", &dir.path().join("nope.toml").to_string_lossy()]).0, 2);

    // a diverging run is marked failed and the sweep exits 2
    let diverge = write(
        dir.path(),
        "diverge.toml",
        "task = \"synthetic-regression\"\ndataset_size = 100\nmethod = \"dense\"\n[network]\nhidden = [8]\n\
         activation = \"relu\"\n[train]\noptimizer = \"sgd-momentum\"\nlearning_rate = 1e6\nsteps = 40\n",
    );
    let (code, table) = cli(&["run", "--config", &diverge, "--out", &out_s]);
    assert_eq!(code, 2);
    assert!(table.contains("failed"), "{table}");

    let (code, text) = cli(&["verify"]);
    assert_eq!(code, 0, "{text}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn sweep_runs_in_parallel_with_stable_order() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[defaults]\ntask = \"small-multiclass\"\ndataset_size = 100\n[defaults.network]\nhidden = [8]\n\
                [defaults.train]\nsteps = 30\neval_every = 10\n\
                [[runs]]\nmethod = \"dense\"\n[[runs]]\nmethod = \"ump\"\nsparsity = [0.2, 0.4]\n\
                [[runs]]\nmethod = \"svd\"\n[runs.svd]\nrank_fraction = [0.5]\n";
    let cfg = write(dir.path(), "sweep.toml", text);
    let a = dir.path().join("a").to_string_lossy().into_owned();
    let b = dir.path().join("b").to_string_lossy().into_owned();
    assert_eq!(cli(&["sweep", "--config", &cfg, "--out", &a, "--jobs", "4"]).0, 0);
    assert_eq!(cli(&["sweep", "--config", &cfg, "--out", &b, "--jobs", "1"]).0, 0);
    let strip = |dir: &str| -> Vec<String> {
        let csv = std::fs::read_to_string(Path::new(dir).join("comparison.csv")).unwrap();
        // drop the wall-clock column
        csv.lines()
            .map(|l| {
                let mut c: Vec<&str> = l.split(',').collect();
                c.remove(16);
                c.join(",")
            })
            .collect()
    };
    let rows = strip(&a);
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("dense,") && rows[4].starts_with("svd-r50,"));
    assert_eq!(rows, strip(&b));
}
