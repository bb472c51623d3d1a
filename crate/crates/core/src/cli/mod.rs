//! Command-line experiment runner.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use commands::{cmd_analyze, cmd_benchmark, cmd_fit, cmd_generate, cmd_poisson, PoissonRow};
pub use config::{ExperimentConfig, FileConfig, Format, LambNormalization, Selector, Spacing};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "ASYMPTOX_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Problem(#[from] crate::problems::ProblemError),
    #[error(transparent)]
    Gp(#[from] crate::gp::GpError),
    #[error(transparent)]
    Series(#[from] crate::series::SeriesError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Parser)]
#[command(name = "asymptox", version, about = "Recover asymptotic expansions from sampled data by symbolic regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the training dataset and its provenance sidecar.
    Generate(CommonArgs),
    /// Run seeded regressions, extract series and compare them to the benchmark.
    Fit(CommonArgs),
    /// Error surfaces and optimal truncation orders.
    Analyze(CommonArgs),
    /// Poisson ratio from bending-mode coefficients A1 or A2.
    Poisson(PoissonArgs),
    /// Evaluate the analytic series on the dataset grid.
    Benchmark(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file with `key = value` settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Output directory (default: $ASYMPTOX_OUT, then `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// collision, kelvin_voigt or rayleigh_lamb.
    #[arg(long)]
    pub problem: Option<String>,
    /// small_delta, near_unit, large_delta or bending.
    #[arg(long)]
    pub regime: Option<String>,
    /// Read training data from this CSV instead of generating it.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Fitted series CSV for `analyze`.
    #[arg(long)]
    pub series: Option<PathBuf>,
}

impl CommonArgs {
    fn as_file_config(&self) -> FileConfig {
        FileConfig {
            problem: self.problem.clone(),
            regime: self.regime.clone(),
            out: self.out.clone(),
            dataset: self.dataset.clone(),
            series: self.series.clone(),
            seed: self.seed,
            runs: self.runs,
            workers: self.workers,
            ..FileConfig::default()
        }
    }

    /// Merges presets, the config file, then flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        file.overlay(self.as_file_config()).resolve(env_out)
    }
}

#[derive(Debug, Clone, Args)]
pub struct PoissonArgs {
    /// A1 value; repeat for several runs.
    #[arg(long = "a1", allow_negative_numbers = true)]
    pub a1: Vec<f64>,
    /// A2 value; repeat for several runs.
    #[arg(long = "a2", allow_negative_numbers = true)]
    pub a2: Vec<f64>,
}

/// Parses `std::env::args` and runs the chosen subcommand.
pub fn run() -> Result<(), CliError> {
    run_with(Cli::parse())
}

pub fn run_with(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a.resolve()?).map(|_| ()),
        Command::Fit(a) => cmd_fit(&a.resolve()?).map(|_| ()),
        Command::Analyze(a) => cmd_analyze(&a.resolve()?).map(|_| ()),
        Command::Benchmark(a) => cmd_benchmark(&a.resolve()?).map(|_| ()),
        Command::Poisson(a) => {
            if a.a1.is_empty() && a.a2.is_empty() {
                return Err(CliError::Usage("poisson needs at least one --a1 or --a2 value".into()));
            }
            print!("{}", commands::poisson_table(&cmd_poisson(&a.a1, &a.a2)));
            Ok(())
        }
    }
}
