//! Command-level errors with stable exit codes.

use std::fmt;

/// Exit codes: 0 success, 1 I/O failure, 2 configuration error,
/// 3 infeasible request, 4 numerical failure.
#[derive(Debug)]
pub enum CliError {
    /// Aggregated configuration problems, reported together.
    Config(Vec<String>),
    Infeasible(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io(_) => 1,
            Self::Config(_) => 2,
            Self::Infeasible(_) => 3,
            Self::Numerical(_) => 4,
        }
    }

    pub fn io(e: std::io::Error, what: impl fmt::Display) -> Self {
        Self::Io(format!("{what}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(errors) => {
                writeln!(f, "configuration error ({} problem(s)):", errors.len())?;
                for e in errors {
                    writeln!(f, "  - {e}")?;
                }
                Ok(())
            }
            Self::Infeasible(msg) => write!(f, "infeasible: {msg}"),
            Self::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            Self::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}
