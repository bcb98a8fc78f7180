//! `confattr`: generate synthetic confounded datasets, attribute observed
//! confounding strength to covariates, run estimator ablation grids, and
//! aggregate stored runs into report tables.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use confattr::data::DataError;
use confattr::dgp::DgpError;
use confattr::game::GameError;
use confattr::metrics::MetricsError;
use confattr::shapley::{Method, ShapleyError};
use confattr::game::ValueMode;

use config::{load_config, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("need at least two stored runs, got {0}")]
    MissingRuns(usize),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dgp(#[from] DgpError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Shapley(#[from] ShapleyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Parser)]
#[command(
    name = "confattr",
    version,
    about = "Attributes observed confounding strength to individual covariates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it with its role sidecar.
    Dgp(RunArgs),
    /// Evaluate the coalition game and write ranked attributions.
    Attribute(RunArgs),
    /// Grid-run budgets, dimensions, and methods; write long-format metrics.
    Benchmark(RunArgs),
    /// Aggregate stored attribution CSVs into stability reports.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the configured seed list (comma-separated).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Override the estimator method (exact | msr | kernel_shap | regression_msr).
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Override the coalition budget.
    #[arg(long)]
    budget: Option<usize>,
    /// Compute per-unit local attributions (exact mode).
    #[arg(long)]
    locals: bool,
    /// Override the value mode (signed | absolute | squared).
    #[arg(long, value_parser = parse_value_mode)]
    value_mode: Option<ValueMode>,
    /// Override cross-fitting folds.
    #[arg(long)]
    cross_fit: Option<usize>,
    /// Print the fully resolved config as JSON and exit.
    #[arg(long)]
    emit_config: bool,
}

#[derive(Args)]
struct MetricsArgs {
    /// Stored attributions.csv files (two or more).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Directory for the aggregated report files.
    #[arg(long)]
    output_dir: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown method `{s}` (expected exact | msr | kernel_shap | regression_msr)"))
}

fn parse_value_mode(s: &str) -> Result<ValueMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown value mode `{s}` (expected signed | absolute | squared)"))
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            output_dir: self.output_dir.clone(),
            seeds: self.seeds.clone(),
            method: self.method,
            budget: self.budget,
            locals: self.locals,
            value_mode: self.value_mode,
            cross_fit: self.cross_fit,
        }
    }
}

/// THREADS caps the global thread pool; the default is the machine's
/// available parallelism.
fn init_threads() -> Result<(), CliError> {
    if let Ok(raw) = std::env::var("THREADS") {
        let threads: usize = raw
            .parse()
            .map_err(|_| CliError::Config(format!("THREADS must be a positive integer, got `{raw}`")))?;
        if threads == 0 {
            return Err(CliError::Config("THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

/// Resolve config plus flag overrides; None means --emit-config already
/// printed the result and the command should not run.
fn resolved(args: &RunArgs) -> Result<Option<config::RunConfig>, CliError> {
    let cfg = load_config(&args.config, &args.overrides())?;
    if args.emit_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(None);
    }
    Ok(Some(cfg))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Dgp(args) => match resolved(&args)? {
            Some(cfg) => commands::cmd_dgp(&cfg),
            None => Ok(()),
        },
        Command::Attribute(args) => match resolved(&args)? {
            Some(cfg) => commands::cmd_attribute(&cfg),
            None => Ok(()),
        },
        Command::Benchmark(args) => match resolved(&args)? {
            Some(cfg) => commands::cmd_benchmark(&cfg),
            None => Ok(()),
        },
        Command::Metrics(args) => commands::cmd_metrics(&args.inputs, &args.output_dir),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads().and_then(|()| run(cli)) {
        eprintln!("error: {e}");
        let mut source = std::error::Error::source(&e);
        while let Some(inner) = source {
            eprintln!("  caused by: {inner}");
            source = inner.source();
        }
        std::process::exit(1);
    }
}
