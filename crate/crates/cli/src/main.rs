//! `roundabout`: simulate the merging-conflict design, compute safety metrics,
//! run the repeated-measures statistics and train stop-or-go classifiers.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const EMPTY: u8 = 4;
    pub const DATA: u8 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: exit::USAGE, message: message.into() }
    }
    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        Self { code: exit::IO, message: format!("{context}: {err}") }
    }
    pub fn empty(message: impl Into<String>) -> Self {
        Self { code: exit::EMPTY, message: message.into() }
    }
    pub fn data(message: impl Into<String>) -> Self {
        Self { code: exit::DATA, message: message.into() }
    }
}

#[derive(Parser)]
#[command(name = "roundabout", version, about = "Roundabout merging-conflict warning simulator")]
struct Cli {
    /// Worker threads for trial-level parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the 3 x 3 design and write trajectories plus manifests.
    Simulate(SimulateArgs),
    /// Compute one safety-metric row per trial directory.
    Metrics(MetricsArgs),
    /// Repeated-measures ANOVA of one metric.
    Stats(StatsArgs),
    /// Train and evaluate a stop-or-go classifier.
    Predict(PredictArgs),
    /// Write the synthetic stop-or-go benchmark.
    Dataset(DatasetArgs),
    /// Kalman-smooth a trajectory CSV.
    Smooth(SmoothArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub repeats: usize,
    /// Master seed; per-driver seeds are derived from it. Overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct MetricsArgs {
    /// Directory holding one subdirectory per trial.
    #[arg(long)]
    pub trials: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct StatsArgs {
    /// Metrics CSV (or long format `subject,warning,aggressiveness,value`).
    #[arg(long)]
    pub input: PathBuf,
    /// Column to analyze; `value` when omitted.
    #[arg(long)]
    pub metric: Option<String>,
    /// Output table; `.json` writes JSON, anything else CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// knn, tree, forest or gbt.
    #[arg(long, default_value = "gbt")]
    pub model: String,
    /// Seed of the train/test split and of the forest.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Metrics JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// ROC points CSV; defaults to the metrics path with a `.roc.csv` suffix.
    #[arg(long)]
    pub roc: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 6)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 2)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 100)]
    pub rounds: usize,
    #[arg(long, default_value_t = 3)]
    pub boost_depth: usize,
    #[arg(long, default_value_t = 0.1)]
    pub shrinkage: f64,
}

#[derive(Args)]
pub struct DatasetArgs {
    /// linear or nonlinear.
    #[arg(long, default_value = "linear")]
    pub variant: String,
    #[arg(long, default_value_t = 288)]
    pub rows: usize,
    #[arg(long, default_value_t = 71)]
    pub go: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SmoothArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Process noise (m/s^2).
    #[arg(long)]
    pub q: Option<f64>,
    /// Measurement noise (m).
    #[arg(long)]
    pub r: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    let run = || match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Metrics(a) => commands::metrics(&a),
        Command::Stats(a) => commands::stats(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Dataset(a) => commands::dataset(&a),
        Command::Smooth(a) => commands::smooth(&a),
    };
    let result = match cli.jobs {
        Some(0) => Err(CliError::usage("--jobs must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(CliError::usage(format!("cannot start {n} workers: {e}"))),
        },
        None => run(),
    };
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
