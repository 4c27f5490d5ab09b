//! Pipelines behind the `fcpinn` binary: generate, train, evaluate,
//! ablate and validate-solver.

pub mod commands;
pub mod config;

pub use config::{Preset, RunConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Usage or configuration problem; exit code 1.
    #[error("configuration error: {0}")]
    Config(String),
    /// Failure while running a pipeline; exit code 2.
    #[error(transparent)]
    Core(#[from] fcpinn_core::CoreError),
    #[error(transparent)]
    Data(#[from] fcpinn_datagen::DatagenError),
    #[error("file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}
