use thiserror::Error;

use crate::expr::{EvalError, ParseError};
use crate::ode::FlowError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("{what} has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize, what: &'static str },
    #[error("generator list is empty")]
    EmptyGenerators,
    #[error("control distribution is not regular ({singular_points} singular grid points)")]
    NotRegular { singular_points: usize },
    #[error("rank {got} at point is inconsistent with regularity rank {expected}")]
    RankMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("spec line {line}: {message}")]
    Spec { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code for CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse(_) => "E_PARSE",
            Error::Eval(_) => "E_EVAL",
            Error::Flow(_) => "E_FLOW",
            Error::Dimension { .. } => "E_DIMENSION",
            Error::EmptyGenerators => "E_EMPTY_CONTROLS",
            Error::NotRegular { .. } => "E_NOT_REGULAR",
            Error::RankMismatch { .. } => "E_RANK",
            Error::InvalidArgument(_) => "E_ARGUMENT",
            Error::Spec { .. } => "E_SPEC",
            Error::Io(_) => "E_IO",
            Error::Json(_) => "E_JSON",
            Error::Csv(_) => "E_CSV",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
