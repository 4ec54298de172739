use blockcanon::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// Valid only up to the semidefinite boundary.
    pub const BOUNDARY: u8 = 1;
    pub const INPUT: u8 = 2;
    pub const DEGENERATE: u8 = 3;
    /// Block-structure or positive-definiteness violation.
    pub const VIOLATION: u8 = 4;
    pub const SINGULAR: u8 = 5;
    pub const NOT_LOGGABLE: u8 = 6;
}

/// An error message paired with the exit code it maps to.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: exit::INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::ZeroVariance { .. } => exit::DEGENERATE,
            Error::StructureViolation { .. } | Error::NotSymmetric(_) => exit::VIOLATION,
            Error::Singular(_) => exit::SINGULAR,
            Error::NotRealLoggable(_) => exit::NOT_LOGGABLE,
            _ => exit::INPUT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
