//! Experiment driver: configuration, subcommands and artifact layout.

pub mod commands;
pub mod config;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }
}

impl From<ltomo::Error> for CliError {
    fn from(e: ltomo::Error) -> Self {
        use ltomo::Error as E;
        match e {
            E::Dimension(_) | E::InvalidParameter(_) => CliError::Usage(e.to_string()),
            E::Divergence { .. } => CliError::Divergence(e.to_string()),
            E::Format(_) | E::Io(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
