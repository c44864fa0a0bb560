//! Command-line front end for bandit control experiments.
//!
//! Three subcommands, all driven by the same JSON experiment config:
//!
//! - `run`: every configured controller across all seeds, CSV outputs.
//! - `estimate`: identification-only study of the least-squares system
//!   estimator at a ladder of sample budgets.
//! - `sweep`: reruns the experiment across a list of step-size multipliers,
//!   one output subdirectory per value.
//!
//! Exit codes: 0 on success, 2 when the config or the arguments fail
//! validation, 1 for runtime failures such as I/O errors. The environment
//! variable `BANDIT_CONTROL_THREADS` caps the worker pool; results are
//! identical for every thread count.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bandit_control::harness::{
    emit_csv, emit_estimate_csv, load_config, run_estimation_study, run_experiment,
    sweep_experiment, ExperimentConfig, HarnessError, RegretReport,
};

#[derive(Parser)]
#[command(name = "bandit-control", version, about = "Bandit control of linear dynamical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured controller across all seeds and write CSVs
    Run(RunArgs),
    /// Identification-only study: fit the system at several sample budgets
    Estimate(EstimateArgs),
    /// Rerun the experiment across a list of step-size multipliers
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config, one JSON document
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides out_dir from the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seed list; overrides the config's seeds
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Experiment config, one JSON document
    #[arg(long)]
    config: PathBuf,
    /// Optional output directory for estimate.csv; overrides out_dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seed list; overrides the config's seeds
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config, one JSON document
    #[arg(long)]
    config: PathBuf,
    /// Output directory root; one subdirectory is created per value
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parameter to sweep; only "eta_multiplier" is supported
    #[arg(long)]
    param: String,
    /// Comma-separated multiplier values; falls back to eta_multipliers
    /// from the config
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Comma-separated seed list; overrides the config's seeds
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Estimate(args) => estimate(args),
        Command::Sweep(args) => sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

// Validation problems exit 2; runtime failures (I/O, numerics) exit 1.
fn exit_code_for(err: &HarnessError) -> u8 {
    match err {
        HarnessError::Config(_) | HarnessError::Json { .. } => 2,
        _ => 1,
    }
}

fn load(config_path: &PathBuf, seeds: Option<Vec<u64>>) -> Result<ExperimentConfig, HarnessError> {
    let mut config = load_config(config_path)?;
    if let Some(seeds) = seeds {
        config.seeds = seeds;
    }
    Ok(config)
}

fn require_out(
    cli_out: Option<PathBuf>,
    config: &ExperimentConfig,
) -> Result<PathBuf, HarnessError> {
    cli_out.or_else(|| config.out_dir.clone()).ok_or_else(|| {
        HarnessError::Config(
            "no output directory: pass --out or set out_dir in the config".to_string(),
        )
    })
}

fn print_summary(report: &RegretReport) {
    println!(
        "{:<16} {:>14} {:>12}   {:>14} {:>12}",
        "controller", "cost_mean", "cost_std", "regret_mean", "regret_std"
    );
    for agg in &report.aggregates {
        println!(
            "{:<16} {:>14.4} {:>12.4}   {:>14.4} {:>12.4}",
            agg.controller,
            agg.total_cost_mean,
            agg.total_cost_std,
            agg.regret_fro_mean,
            agg.regret_fro_std
        );
    }
}

fn run(args: RunArgs) -> Result<(), HarnessError> {
    let config = load(&args.config, args.seeds)?;
    let out_dir = require_out(args.out, &config)?;
    let report = run_experiment(&config)?;
    print_summary(&report);
    let files = emit_csv(&report, &out_dir)?;
    println!("wrote {} files under {}", files.len(), out_dir.display());
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<(), HarnessError> {
    let config = load(&args.config, args.seeds)?;
    let records = run_estimation_study(&config)?;
    println!(
        "{:<8} {:>8} {:>14} {:>14}   {}",
        "seed", "n", "residual", "err_l1_op", "rank_deficient"
    );
    for r in &records {
        println!(
            "{:<8} {:>8} {:>14.6e} {:>14.6e}   {}",
            r.seed, r.n, r.residual, r.err_l1_op, r.rank_deficient
        );
    }
    if let Some(out_dir) = args.out.or_else(|| config.out_dir.clone()) {
        let path = emit_estimate_csv(&records, &out_dir)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), HarnessError> {
    if args.param != "eta_multiplier" {
        return Err(HarnessError::Config(format!(
            "unknown sweep parameter {:?}; only \"eta_multiplier\" is supported",
            args.param
        )));
    }
    let config = load(&args.config, args.seeds)?;
    let out_dir = require_out(args.out, &config)?;
    let values = args.values.or_else(|| config.eta_multipliers.clone()).ok_or_else(|| {
        HarnessError::Config(
            "no sweep values: pass --values or set eta_multipliers in the config".to_string(),
        )
    })?;
    for (value, report) in sweep_experiment(&config, &values)? {
        let sub_dir = out_dir.join(format!("eta_multiplier_{value}"));
        println!("eta_multiplier = {value}");
        print_summary(&report);
        let files = emit_csv(&report, &sub_dir)?;
        println!("wrote {} files under {}", files.len(), sub_dir.display());
    }
    Ok(())
}
