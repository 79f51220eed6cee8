//! Experiment driver: trains analytic and SGD models on the benchmark
//! datasets and writes plot-ready result tables.

use thiserror::Error;

use voodoo_core::analysis::AnalysisError;
use voodoo_core::baseline::BaselineError;
use voodoo_core::data::DataError;
use voodoo_core::elm::ElmError;
use voodoo_core::persist::PersistError;

pub mod commands;
pub mod config;
pub mod record;

pub use commands::{
    cmd_baseline, cmd_entropy, cmd_robustness, cmd_scaling, cmd_solvers, cmd_train, load_splits, Splits,
};
pub use config::{Command, ExperimentConfig, Format};
pub use record::RunRecord;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// A comparison the command is meant to confirm did not hold.
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    /// 1 for numeric or solver failures, 2 for I/O and configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) | CliError::Check(_) => 1,
            CliError::Config(_) | CliError::Io(_) | CliError::Data(_) | CliError::Persist(_) => 2,
        }
    }
}

impl From<ElmError> for CliError {
    fn from(e: ElmError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::InvalidHyper(msg) => CliError::Config(msg),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::NotSquare(_) | AnalysisError::InvalidArgument(_) => CliError::Config(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}
