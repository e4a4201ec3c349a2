//! Error taxonomy shared by every module of the crate.
//!
//! Numeric precondition failures (margins, ladders, divisibility) are kept
//! distinct from parse/schema failures so callers can map them to different
//! exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An operator needed more margin nodes than the signal carries.
    #[error("insufficient margin on the {side}: need {needed} nodes, have {available}")]
    InsufficientMargin {
        needed: usize,
        available: usize,
        side: &'static str,
    },

    #[error("ladder too short: {len} entries, need at least {min}")]
    LadderTooShort { len: usize, min: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("step does not divide: {0}")]
    StepNotDividing(String),

    #[error("too few samples: need {needed}, have {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid regime: {0}")]
    InvalidRegime(String),

    #[error("axis {axis} out of range for a field with {dims} axes")]
    AxisOutOfRange { axis: usize, dims: usize },

    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown identifier `{name}` at offset {pos}")]
    UnknownIdentifier { name: String, pos: usize },

    #[error("unbound variable `{0}`")]
    UnboundVariable(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("evaluation error: {0}")]
    EvaluationError(String),

    #[error("lagrangian is not z-free: {0}")]
    NotZFree(String),

    #[error("problem has no free boundary")]
    NoFreeBoundary,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that describe a numeric precondition failure rather
    /// than malformed input text.
    pub fn is_numeric_precondition(&self) -> bool {
        matches!(
            self,
            Error::InsufficientMargin { .. }
                | Error::LadderTooShort { .. }
                | Error::GridMismatch(_)
                | Error::StepNotDividing(_)
                | Error::TooFewSamples { .. }
                | Error::InvalidRegime(_)
                | Error::AxisOutOfRange { .. }
                | Error::DomainError(_)
                | Error::EvaluationError(_)
                | Error::NotZFree(_)
                | Error::NoFreeBoundary
                | Error::InvalidGrid(_)
                | Error::InvalidParameter(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
