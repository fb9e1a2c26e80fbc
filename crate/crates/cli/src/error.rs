use std::path::PathBuf;

use sdm_core::ErrorKind;
use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid configuration file {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("input file {0} does not exist")]
    MissingInput(PathBuf),

    #[error(transparent)]
    Core(#[from] sdm_core::Error),
}

impl CliError {
    /// 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::MissingInput(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            },
        }
    }
}
