//! Crate-wide error type.
//!
//! Variants map onto the CLI exit codes: validation errors exit 2,
//! numerical failures exit 3, guard violations exit 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlsemError {
    /// Bad inputs: shape mismatches, out-of-range parameters, malformed files.
    #[error("validation error: {0}")]
    Validation(String),

    /// Numerical failure: non-PSD matrices, singular systems, degenerate fits.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A tractability guard was exceeded (e.g. subset enumeration too large).
    #[error("guard exceeded: {0}")]
    Guard(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl FlsemError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            FlsemError::Validation(_) | FlsemError::Io(_) => 2,
            FlsemError::Numerical(_) => 3,
            FlsemError::Guard(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, FlsemError>;

pub(crate) fn validation(msg: impl Into<String>) -> FlsemError {
    FlsemError::Validation(msg.into())
}

pub(crate) fn numerical(msg: impl Into<String>) -> FlsemError {
    FlsemError::Numerical(msg.into())
}
