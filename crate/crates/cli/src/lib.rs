//! Library side of the `rankmin` command-line tool.
//!
//! The binary only parses arguments; every subcommand is a function here so
//! the integration tests can drive the same code paths.

pub mod commands;
pub mod inpaint;
pub mod penalty_arg;

use std::fmt;

/// Exit status for a successful run.
pub const EXIT_OK: u8 = 0;
/// A solver gave up or one of its runtime checks failed.
pub const EXIT_SOLVER: u8 = 1;
/// Unreadable input, unwritable output or an invalid configuration.
pub const EXIT_CONFIG: u8 = 2;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn solver(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_SOLVER,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<rankmin::Error> for Failure {
    fn from(e: rankmin::Error) -> Self {
        use rankmin::Error as E;
        match e {
            E::SvdNotConverged { .. } | E::NonFiniteObjective { .. } | E::InequalityViolated { .. } => {
                Failure::solver(e.to_string())
            }
            _ => Failure::config(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;
