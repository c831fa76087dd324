//! Library surface of the experiment runner, so integration tests can drive
//! the same code path as the binary.

pub mod config;
pub mod experiments;
pub mod report;

use thiserror::Error;

/// CLI failure classes, mapped to process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for configuration problems, 3 for numeric/convergence failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numeric(_) => "numeric",
            CliError::Io(_) => "io",
        }
    }
}

impl From<bayesflow::Error> for CliError {
    fn from(e: bayesflow::Error) -> Self {
        match &e {
            bayesflow::Error::InvalidInput(_)
            | bayesflow::Error::UnknownCatalogKey(_)
            | bayesflow::Error::InvalidDomain(_)
            | bayesflow::Error::Parse(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}
