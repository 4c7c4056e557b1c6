use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum SpdtError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("empty sample: {0}")]
    EmptySample(&'static str),

    #[error("cannot select {requested} distinct neighbors: only {available} candidates")]
    PopulationExhausted { requested: usize, available: usize },

    #[error("optimizer did not converge after {iterations} iterations (last iterate alpha={alpha}, xi={xi})")]
    NoConvergence {
        iterations: usize,
        alpha: f64,
        xi: f64,
    },

    #[error("score function has no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("activation frequency {mean_frequency} is inconsistent with rho (requires < {limit})")]
    InconsistentFrequency { mean_frequency: f64, limit: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = SpdtError> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> SpdtError {
    SpdtError::InvalidParam {
        field,
        reason: reason.into(),
    }
}

pub(crate) fn parse_err(line: usize, message: impl Into<String>) -> SpdtError {
    SpdtError::Parse {
        line,
        message: message.into(),
    }
}
