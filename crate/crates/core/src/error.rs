use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate channel: {0}")]
    Degenerate(String),

    /// The requested operating point lies outside the region where the
    /// scheme is specified. Callers that want the out-of-condition behaviour
    /// must opt in explicitly.
    #[error("out of scope: {0}")]
    Scope(String),

    #[error("coefficient length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("system is not solvable for unknown {0}")]
    NotSolvable(usize),

    #[error("enumeration too large: {0} atoms exceeds cap")]
    SizeCap(u128),

    #[error("unknown variable: {0}")]
    UnknownVariable(String),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
