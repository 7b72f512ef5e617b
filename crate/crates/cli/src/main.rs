//! `monoscat` — scenario-driven solver for 2D multiple scattering by
//! clusters of dielectric rods, with cluster fields compressed onto
//! monopole layers along enclosing curves.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.
//! Failures print machine-readable JSON on standard error.

use clap::{Parser, Subcommand};
use monoscat_cli::runner::{self, RunOptions};
use monoscat_cli::CliError;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "monoscat",
    version,
    about = "Multiple scattering by rod clusters via monopole-layer compression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, clap::Args)]
struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Output directory for CSVs and report.json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for field evaluation (default: one per CPU).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Override every cluster's rod-fill seed (cluster j gets seed + j).
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Run a discarded warm-up pass before the timed one.
    #[arg(long)]
    bench: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve all rods as one dense system (the reference).
    Direct(CommonArgs),
    /// Reference solve plus per-cluster monopole-layer fits.
    Fit(CommonArgs),
    /// Coupled cluster solve through fitted monopole layers.
    Fmm(CommonArgs),
    /// Run direct and fmm, compare traces and wall times.
    Compare(CommonArgs),
    /// Parse and validate a scenario without solving.
    Validate(CommonArgs),
}

impl From<&CommonArgs> for RunOptions {
    fn from(a: &CommonArgs) -> RunOptions {
        RunOptions {
            scenario_path: a.scenario.clone(),
            out_dir: a.out.clone(),
            workers: a.workers,
            seed: a.seed,
            bench: a.bench,
        }
    }
}

/// Print to stdout, treating a broken pipe (e.g. `monoscat validate | head`)
/// as a normal early exit rather than a panic.
fn emit(line: &str) {
    use std::io::Write;
    let mut out = std::io::stdout();
    if let Err(e) = writeln!(out, "{line}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("failed printing to stdout: {e}");
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Direct(a) => {
            let report = runner::run_direct(&a.into())?;
            emit(&format!(
                "direct: {} rods solved in {:.3} s",
                report.total_rods, report.timings.total
            ));
        }
        Command::Fit(a) => {
            let report = runner::run_fit(&a.into())?;
            let err = report.error_metrics.expect("fit mode records metrics");
            emit(&format!(
                "fit: {} rods, validation-curve disagreement {:.3e} (max), {:.3e} (L2)",
                report.total_rods, err.max_relative, err.l2_relative
            ));
        }
        Command::Fmm(a) => {
            let report = runner::run_fmm(&a.into())?;
            emit(&format!(
                "fmm: {} rods, {} sweeps, converged = {}",
                report.total_rods,
                report.iterations.unwrap_or(0),
                report.converged.unwrap_or(false)
            ));
        }
        Command::Compare(a) => {
            let report = runner::run_compare(&a.into())?;
            let err = report.error_metrics.expect("compare mode records metrics");
            emit(&format!(
                "compare: trace disagreement {:.3e} (max), wall ratio direct/fmm = {:.2}",
                err.max_relative,
                report.timing_ratio.unwrap_or(f64::NAN)
            ));
        }
        Command::Validate(a) => {
            let summary = runner::run_validate(&a.into())?;
            emit(&serde_json::to_string_pretty(&summary).expect("json"));
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
