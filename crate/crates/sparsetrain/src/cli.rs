//! Command-line interface.
//!
//! Exit status: 0 on success, 1 for a bad config or bad arguments, 2 when a
//! run fails, 3 when `verify` finds a broken invariant.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_sparsity_list, ExperimentConfig, Method, Overrides, SweepConfig};
use crate::error::{HarnessError, Result};
use crate::report::{compare_sweep, RunOutcome};
use crate::runner::{self, output_root, OUT_ENV};
use crate::verify::run_checks;

#[derive(Debug, Parser)]
#[command(name = "sparsetrain", version, about = "Train, prune and compare sparse networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every grid point of one experiment config.
    Run(RunArgs),
    /// Run a sweep file and print the comparison table.
    Sweep(RunArgs),
    /// Re-render the comparison table from reports on disk.
    Report {
        /// Output root holding one directory per run.
        #[arg(long, env = OUT_ENV)]
        out: Option<PathBuf>,
        /// Print CSV instead of the text table.
        #[arg(long)]
        csv: bool,
    },
    /// Run the built-in invariant and oracle checks.
    Verify,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output root; falls back to the config's `out`, then the environment.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Runs to execute concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    /// Comma-separated sparsity grid, e.g. `0.2,0.4`.
    #[arg(long)]
    pub sparsity: Option<String>,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method `{s}` (expected one of {})", names.join(", "))
    })
}

impl RunArgs {
    fn overrides(&self) -> Result<Overrides> {
        Ok(Overrides {
            seed: self.seed,
            out: self.out.clone(),
            method: self.method,
            sparsity: self.sparsity.as_deref().map(parse_sparsity_list).transpose()?,
        })
    }
}

fn print_table(out: &mut dyn Write, outcomes: &[RunOutcome], root: &Path) -> Result<u8> {
    let table = compare_sweep(outcomes)?;
    let _ = write!(out, "{}", table.render());
    let _ = writeln!(out, "artifacts in {}", root.display());
    for o in outcomes {
        if let RunOutcome::Failed { error, .. } = o {
            eprintln!("error: {error}");
        }
    }
    Ok(if table.failed() > 0 { 2 } else { 0 })
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<u8> {
    match cli.command {
        Command::Run(args) => {
            let cfg = ExperimentConfig::load(&args.config, &args.overrides()?)?;
            let root = output_root(args.out.as_deref(), cfg.out.as_deref());
            let specs = cfg.expand();
            let (outcomes, _) = runner::sweep(&specs, &root, args.jobs)?;
            print_table(out, &outcomes, &root)
        }
        Command::Sweep(args) => {
            let sweep = SweepConfig::load(&args.config, &args.overrides()?)?;
            let root = output_root(args.out.as_deref(), sweep.experiments[0].out.as_deref());
            let (outcomes, _) = runner::sweep(&sweep.expand(), &root, args.jobs)?;
            print_table(out, &outcomes, &root)
        }
        Command::Report { out: dir, csv } => {
            let root = output_root(dir.as_deref(), None);
            let reports = runner::load_reports(&root)?;
            let outcomes: Vec<RunOutcome> = reports.into_iter().map(|r| RunOutcome::Completed(Box::new(r))).collect();
            let table = compare_sweep(&outcomes)?;
            let _ = if csv { write!(out, "{}", table.to_csv()) } else { write!(out, "{}", table.render()) };
            Ok(0)
        }
        Command::Verify => {
            let checks = run_checks();
            let failed: Vec<String> = checks
                .iter()
                .filter_map(|c| {
                    let _ = match &c.outcome {
                        Ok(()) => writeln!(out, "ok    {}", c.name),
                        Err(e) => writeln!(out, "FAIL  {}: {e}", c.name),
                    };
                    c.outcome.is_err().then(|| c.name.to_string())
                })
                .collect();
            if failed.is_empty() {
                Ok(0)
            } else {
                Err(HarnessError::Verify(failed.join(", ")))
            }
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Output goes to `out`, diagnostics to stderr.
pub fn run_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, out: &mut dyn Write) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> u8 {
    run_with(args, &mut std::io::stdout().lock())
}
