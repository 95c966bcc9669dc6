use thiserror::Error;

/// Errors raised by the simulation engine and its analysis layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical failure on {rows}x{cols} matrix: {message}")]
    Numerical {
        rows: usize,
        cols: usize,
        message: String,
    },

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("fit domain error: non-positive samples at r = {0:?}")]
    FitDomain(Vec<usize>),

    #[error("degenerate correlation profile: {0}")]
    Degenerate(String),

    #[error("singular abscissa: fit window {lo}..{hi} contains the critical coupling {critical}")]
    SingularAbscissa { lo: f64, hi: f64, critical: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("resource guard exceeded: {0}")]
    Resource(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}

pub(crate) fn param_err(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
