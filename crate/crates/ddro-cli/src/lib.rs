//! Command-line front end: fit sets, query support functions, solve robust
//! programs and run the portfolio and queue experiments.

mod commands;
mod error;
mod io;
mod problem;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::CliError;
pub use problem::ProblemFile;

#[derive(Debug, Parser)]
#[command(name = "ddro", version, about = "Data-driven uncertainty sets and robust linear optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an uncertainty set to a CSV sample and write it as JSON.
    Fit(FitArgs),
    /// Evaluate a stored set's support function at one direction.
    Support(SupportArgs),
    /// Solve a robust linear program described by a JSON file.
    Solve(SolveArgs),
    /// Solve a robust program while optimizing per-constraint ε under a budget.
    Alloc(AllocArgs),
    /// Run the factor-market portfolio experiment.
    Portfolio(PortfolioArgs),
    /// Waiting-time bounds for a single-server queue.
    Queue(QueueArgs),
    /// Rank candidate sets by k-fold cross-validation on a return sample.
    Cv(CvArgs),
}

#[derive(Debug, Args)]
pub struct Output {
    /// Write JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the flat TSV series here (defaults to the --out path with a .tsv extension).
    #[arg(long)]
    pub tsv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub set: String,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Needed by the M set, whose shape depends on ε.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub nb: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Known support box, lo1:hi1,lo2:hi2,...
    #[arg(long = "box")]
    pub support_box: Option<String>,
    /// Also clip the fitted set to the support box.
    #[arg(long)]
    pub clip: bool,
    pub data: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SupportArgs {
    #[arg(long)]
    pub set_file: PathBuf,
    #[arg(long)]
    pub eps: f64,
    /// Direction as comma-separated numbers.
    #[arg(long, allow_hyphen_values = true)]
    pub v: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub problem: PathBuf,
    /// Feasibility tolerance of the cutting-plane loop.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub min_norm: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct AllocArgs {
    pub problem: PathBuf,
    #[arg(long)]
    pub eps_bar: f64,
    #[arg(long, default_value_t = ddro::alloc::DEFAULT_KAPPA)]
    pub kappa: f64,
    #[arg(long, default_value_t = 50)]
    pub max_rounds: usize,
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct PortfolioArgs {
    /// Comma-separated set names.
    #[arg(long, default_value = "m,cs,lcx")]
    pub set: String,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 10_000)]
    pub nb: usize,
    /// Samples per replication.
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// First seed; replication r uses seed + r.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also cross-validate each replication with this many folds.
    #[arg(long)]
    pub folds: Option<usize>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct QueueArgs {
    /// fb1, fb2, fb3, cs1, cs2, cs3 or kingman; comma-separated for several.
    #[arg(long, default_value = "fb2")]
    pub variant: String,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, alias = "eps-bar", default_value_t = 0.5)]
    pub eps: f64,
    /// Comma-separated ε values; writes a bound per ε (a CDF envelope).
    #[arg(long)]
    pub eps_grid: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    pub nb: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Without data files: replications on the built-in model.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Samples per replication.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Service and interarrival bounds; default to the sample maxima.
    #[arg(long)]
    pub service_bound: Option<f64>,
    #[arg(long)]
    pub interarrival_bound: Option<f64>,
    /// Single-column CSVs of service and interarrival times.
    pub service: Option<PathBuf>,
    pub interarrival: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    /// Comma-separated candidate set names.
    #[arg(long, default_value = "m,cs,lcx")]
    pub set: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 10_000)]
    pub nb: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "box")]
    pub support_box: Option<String>,
    pub data: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Support(a) => commands::support(a),
        Command::Solve(a) => commands::solve(a),
        Command::Alloc(a) => commands::alloc(a),
        Command::Portfolio(a) => commands::portfolio(a),
        Command::Queue(a) => commands::queue(a),
        Command::Cv(a) => commands::cv(a),
    }
}
