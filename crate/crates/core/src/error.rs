use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration step size underflow at t = {t} s")]
    StepUnderflow { t: f64 },

    #[error("{variable} went negative ({value}) at t = {t} s")]
    NegativeState {
        variable: &'static str,
        value: f64,
        t: f64,
    },

    #[error("no root: standard potential E0 = {e0} V must be positive")]
    NoRoot { e0: f64 },

    #[error("rate constant minimum lies at the upper bound k_hi = {k_hi} (sse = {sse}); widen the bounds")]
    BoundHit { k_hi: f64, sse: f64 },

    #[error("degenerate profile: {0}")]
    Degenerate(String),

    #[error("load #{index} ({r_ext} ohm): {source}")]
    AtLoad {
        index: usize,
        r_ext: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("record #{index}: {source}")]
    AtRecord {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep {parameter} = {value}: {source}")]
    Sweep {
        parameter: &'static str,
        value: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures of the numerical machinery (solver, integrator,
    /// optimizer) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::StepUnderflow { .. }
            | Error::NegativeState { .. }
            | Error::BoundHit { .. }
            | Error::Degenerate(_) => true,
            Error::NoRoot { .. } => false,
            Error::AtLoad { source, .. }
            | Error::AtRecord { source, .. }
            | Error::Sweep { source, .. } => source.is_numerical(),
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Validation { .. }
            | Error::Domain(_) => false,
        }
    }

    pub(crate) fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            message: message.into(),
        }
    }
}
