//! Library side of the `psps` command: configuration, the four verbs and
//! the artifacts they write. `main.rs` only parses arguments.

pub mod commands;
pub mod config;
pub mod output;

pub use psps_core as core;

use std::fmt;

/// Process exit codes; a stable contract for scripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Usage = 2,
    NotConverged = 3,
    SolverFailure = 4,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// A failure tagged with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn usage(source: impl Into<anyhow::Error>) -> Self {
        Self {
            exit: Exit::Usage,
            source: source.into(),
        }
    }

    pub fn solver(source: impl Into<anyhow::Error>) -> Self {
        Self {
            exit: Exit::SolverFailure,
            source: source.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl std::error::Error for CliError {}
