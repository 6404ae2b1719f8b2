use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Direction of a zero-length vector was requested.
    #[error("direction undefined for a zero-length vector{}", fmt_index(.index))]
    UndefinedDirection { index: Option<usize> },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite log-density at time index {index}{}", fmt_sweep(.sweep))]
    NonFiniteLikelihood { index: usize, sweep: Option<usize> },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("data error{}: {msg}", fmt_line(.line))]
    Data { line: Option<usize>, msg: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("draw directory {dir}: {msg}")]
    Draws { dir: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data { line: None, msg: msg.into() }
    }

    pub(crate) fn data_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Data { line: Some(line), msg: msg.into() }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// Process exit code used by the `stap` binary: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InvalidParameter(_) => 1,
            Error::Data { .. }
            | Error::LengthMismatch { .. }
            | Error::Draws { .. }
            | Error::Io(_)
            | Error::Csv(_) => 2,
            Error::UndefinedDirection { .. }
            | Error::NotSpd(_)
            | Error::NonFiniteLikelihood { .. }
            | Error::Numeric(_) => 3,
        }
    }
}

fn fmt_index(index: &Option<usize>) -> String {
    index.map(|i| format!(" at index {i}")).unwrap_or_default()
}

fn fmt_sweep(sweep: &Option<usize>) -> String {
    sweep.map(|s| format!(" (sweep {s})")).unwrap_or_default()
}

fn fmt_line(line: &Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}
