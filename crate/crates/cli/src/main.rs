//! Command-line driver for the spectral kernel learning pipeline.
//!
//! Exit codes: 0 success, 1 config/validation error, 2 runtime/numerical
//! error, 3 I/O error.

// `!(x > 0.0)` in the config checks rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::MatrixKind;
use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<boltzrff::Error> for CliError {
    fn from(err: boltzrff::Error) -> Self {
        use boltzrff::Error::*;
        match err {
            Io(_) | Parse { .. } => CliError::Io(err.to_string()),
            _ => CliError::Runtime(err.to_string()),
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(err: config::ConfigError) -> Self {
        CliError::Config(err.0)
    }
}

/// Spectral kernel learning: train a Boltzmann-machine spectral
/// distribution for random Fourier features, classify with a kernel
/// perceptron, and compare against a Gaussian-bandwidth baseline.
#[derive(Parser)]
#[command(name = "boltzrff", version)]
struct Cli {
    /// Path to the run configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides outputs.directory from the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Overrides every seed in the config (data, kernel, classifier,
    /// baseline).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest IDX files, select two classes, split, compress with PCA.
    Prepare,
    /// Learn the spectral distribution on the training split.
    TrainKernel,
    /// Train and evaluate the kernel perceptron over the learned bank.
    TrainClassifier,
    /// Grid-search a Gaussian spectral baseline and evaluate it.
    Baseline,
    /// Export the train-split kernel matrix for a chosen bank.
    ExportKernelMatrix {
        #[arg(long, value_enum)]
        which: MatrixKind,
    },
    /// Evaluate a model checkpoint on a dataset CSV.
    Evaluate {
        /// Model checkpoint path (default: <outputs>/model.json).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Frequency bank path (default: <outputs>/bank.csv).
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Dataset CSV path (default: <outputs>/test.csv).
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut config = RunConfig::load(&config_path)?;
    if let Some(dir) = cli.output_dir {
        config.outputs.directory = dir;
    }
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }

    match cli.command {
        Command::Prepare => commands::cmd_prepare(&config),
        Command::TrainKernel => commands::cmd_train_kernel(&config),
        Command::TrainClassifier => commands::cmd_train_classifier(&config),
        Command::Baseline => commands::cmd_baseline(&config),
        Command::ExportKernelMatrix { which } => commands::cmd_export_kernel_matrix(&config, which),
        Command::Evaluate { model, bank, data } => {
            commands::cmd_evaluate(&config, model, bank, data)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code())
        }
    }
}
