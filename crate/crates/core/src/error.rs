use thiserror::Error;

/// Errors produced by the awar library.
#[derive(Debug, Error)]
pub enum AwarError {
    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{0} must contain both classes")]
    SingleClass(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("linear system is singular ({0})")]
    Singular(String),

    #[error("quadratic program is not convex: smallest eigenvalue {0:e}")]
    NotConvex(f64),

    #[error("quadratic program ended with status {status:?} (kkt residual {residual:e})")]
    QpFailed {
        status: crate::qp::QpStatus,
        residual: f64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, AwarError>;
