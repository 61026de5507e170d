use std::path::PathBuf;

use thiserror::Error;

/// Coarse error classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is numerically singular (pivot {pivot:.3e} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("matrix has a negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("spectral radius certificate {bound:.6} is not below one")]
    UnstableSystem { bound: f64 },

    #[error("post-shock price of asset {asset} is not positive ({price})")]
    NonpositivePrice { asset: usize, price: f64 },

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("aggregation is degenerate: 1'G^-1 1 = {0:.3e}")]
    DegenerateAggregation(f64),

    #[error("total holdings are zero")]
    ZeroTotal,

    #[error("invalid liquidation strategy: {0}")]
    InvalidStrategy(String),

    #[error("lemma hypothesis not met: {0}")]
    HypothesisNotMet(String),

    #[error("infeasible holdings: {0}")]
    InfeasibleHoldings(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("{message}")]
    Validation { code: &'static str, message: String },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(code: &'static str, message: impl Into<String>) -> Self {
        Error::Validation {
            code,
            message: message.into(),
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DIMENSION_MISMATCH",
            Error::NonFinite(_) => "NON_FINITE",
            Error::SingularMatrix { .. } => "SINGULAR_MATRIX",
            Error::NegativeEntry { .. } => "NEGATIVE_ENTRY",
            Error::UnstableSystem { .. } => "UNSTABLE_SYSTEM",
            Error::NonpositivePrice { .. } => "NONPOSITIVE_PRICE",
            Error::AssumptionViolated(_) => "ASSUMPTION_VIOLATED",
            Error::DegenerateAggregation(_) => "DEGENERATE_AGGREGATION",
            Error::ZeroTotal => "ZERO_TOTAL",
            Error::InvalidStrategy(_) => "INVALID_STRATEGY",
            Error::HypothesisNotMet(_) => "HYPOTHESIS_NOT_MET",
            Error::InfeasibleHoldings(_) => "INFEASIBLE_HOLDINGS",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::Validation { code, .. } => code,
            Error::Io { .. } => "IO_ERROR",
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. }
            | Error::Validation { .. }
            | Error::DimensionMismatch(_)
            | Error::NonFinite(_)
            | Error::AssumptionViolated(_)
            | Error::InvalidStrategy(_)
            | Error::HypothesisNotMet(_)
            | Error::InfeasibleHoldings(_)
            | Error::ZeroTotal => ErrorKind::Validation,
            Error::SingularMatrix { .. }
            | Error::NegativeEntry { .. }
            | Error::UnstableSystem { .. }
            | Error::NonpositivePrice { .. }
            | Error::DegenerateAggregation(_) => ErrorKind::Numerical,
            Error::Io { .. } => ErrorKind::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
