use std::fmt;

use checklist_core::harness::{RunError, SynthError};
use checklist_core::pool::PoolError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    /// Remote calls kept failing after retries and a fold could not finish.
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Transport(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Transport(m) => write!(f, "remote endpoint unavailable: {m}"),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(m) => CliError::Config(m),
            RunError::Pool(PoolError::InvalidConfig(m)) => CliError::Config(m),
            RunError::Data(e) => CliError::Data(e.to_string()),
            RunError::Pool(e) => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(_) | SynthError::UnreachableTarget { .. } => CliError::Config(e.to_string()),
            SynthError::Data(_) | SynthError::Io(_) => CliError::Data(e.to_string()),
        }
    }
}
