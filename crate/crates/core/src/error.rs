use thiserror::Error;

use crate::physics::AssumptionViolation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// Config file rejected; `line` is 1-based when known.
    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("precondition violated: {what} (offending value {value:e})")]
    Precondition { what: &'static str, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{0}")]
    Assumption(AssumptionViolation),

    #[error("numerical blow-up at step {step}: max |y| = {max_abs:e}")]
    BlowUp { step: usize, max_abs: f64 },

    #[error("{failed} of {total} paths failed (first failure on path {first_path}: {first})")]
    Ensemble {
        failed: usize,
        total: usize,
        first_path: usize,
        first: Box<Error>,
    },

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the error (or the first failure of an ensemble) is a numerical blow-up.
    pub fn is_blow_up(&self) -> bool {
        match self {
            Error::BlowUp { .. } => true,
            Error::Ensemble { first, .. } => first.is_blow_up(),
            _ => false,
        }
    }
}
