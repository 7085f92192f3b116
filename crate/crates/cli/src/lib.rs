//! The `minerf` command line: dataset synthesis, training, rendering,
//! evaluation and the gradient diagnostics report.
//!
//! Every command writes a `manifest.json` into its output directory holding
//! the resolved configuration, input hashes, artifacts and timings.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;

use thiserror::Error;

pub use args::{Cli, Command};
pub use manifest::RunManifest;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration; nothing was run.
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<minerf_core::Error> for CliError {
    fn from(e: minerf_core::Error) -> Self {
        match e {
            minerf_core::Error::Config(msg) => CliError::Config(msg),
            other => CliError::Runtime(other.into()),
        }
    }
}

/// Sets up the worker pool and runs one command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Runtime(e.into()))?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Render(a) => commands::render(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
    }
}
