//! Library surface of the `execq` binary: configuration handling and the
//! command implementations, exposed so integration tests drive the exact
//! code paths the CLI runs.

pub mod commands;
pub mod config;

/// Command-level failure, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Configuration or usage problem (exit code 2).
    Usage(String),
    /// Failure during a valid run (exit code 1).
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}
