//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset construction, numerical kernels and estimators.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible dimensions between two inputs.
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    /// A NaN or infinity reached a numerical kernel.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// The design matrix has column rank below its column count.
    ///
    /// Signals collinear covariates or degenerate instruments.
    #[error("rank-deficient design: rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    /// The logistic likelihood has no finite maximizer (perfect separation
    /// or a degenerate response).
    #[error("logistic fit did not identify a finite maximum (separation or degenerate response)")]
    Separation,

    /// Iteration cap reached without meeting the convergence tolerance.
    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },

    /// A response that must be coded 0/1 contains other values.
    #[error("binary response required: found value {value} at row {row}")]
    NonBinaryResponse { row: usize, value: f64 },

    /// A mapped column is absent from the input file.
    #[error("column {name:?} not found in input")]
    MissingColumn { name: String },

    /// The same column name was mapped to more than one role.
    #[error("column {name:?} mapped more than once")]
    DuplicateColumn { name: String },

    /// The assignment column contains a value other than 0 or 1, or only a
    /// single level after filtering.
    #[error("assignment column is not two-level 0/1: {detail}")]
    NonBinaryAssignment { detail: String },

    /// Filtering left fewer than two usable rows.
    #[error("fewer than two rows remain after filtering")]
    EmptyAfterFiltering,

    /// A cell could not be parsed as a number.
    #[error("cannot parse column {column:?} at data row {row}: {value:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    /// The mediator is not coded 0/1 where a binary mediator is required.
    #[error("mediator is not coded 0/1; odds-ratio diagnostic unavailable")]
    NonBinaryMediator,

    /// The two-stage estimator needs at least one instrumented covariate.
    #[error("at least one instrumented covariate is required")]
    NoInstrumentedCovariates,

    /// An instrument count of zero has no critical value.
    #[error("invalid instrument count: {count}")]
    InvalidCount { count: i64 },

    /// A scenario specification violates its own constraints.
    #[error("invalid scenario: {reason}")]
    InvalidSpec { reason: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            got,
        }
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }

    pub(crate) fn invalid_spec(reason: impl Into<String>) -> Self {
        Error::InvalidSpec {
            reason: reason.into(),
        }
    }
}
