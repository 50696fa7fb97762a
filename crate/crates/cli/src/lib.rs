//! The `naf` command-line tool.

pub mod commands;
pub mod config;

use clap::{Parser, Subcommand};
use naf_core::NafError;
use thiserror::Error;

pub use config::{Flags, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] NafError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Runtime(NafError::Config(_)) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "naf",
    version,
    about = "Neural attention forests for tabular regression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit a forest, train both attention networks, write model.json and
    /// loss_history.csv.
    Train,
    /// Predict y and the reconstructed features for every row of --input.
    Predict,
    /// Repeated hold-out R² comparison of plain forests and NAF models.
    Bench,
    /// Rank the training rows behind the prediction for --query.
    Explain,
    /// Write a synthetic dataset as CSV.
    GenData,
}

/// Resolve the configuration and run one command; returns the lines to print.
pub fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    let cfg = cli.flags.resolve()?;
    match cli.command {
        Command::Train => commands::cmd_train(&cfg),
        Command::Predict => commands::cmd_predict(&cfg),
        Command::Bench => commands::cmd_bench(&cfg),
        Command::Explain => commands::cmd_explain(&cfg),
        Command::GenData => commands::cmd_gen_data(&cfg),
    }
}

/// Cap the global thread pool from `NAF_THREADS`.
pub fn init_threads(value: Option<&str>) -> Result<(), CliError> {
    let Some(value) = value else {
        return Ok(());
    };
    let n: usize =
        value.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Usage(format!("NAF_THREADS must be a positive integer, got {value:?}"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))
}
