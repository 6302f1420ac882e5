use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: line {line}: {msg}")]
    Csv { path: PathBuf, line: u64, msg: String },

    #[error("cell ({row}, {col}) out of range for a {n_circ}x{n_long} grid")]
    OutOfRange {
        row: usize,
        col: usize,
        n_circ: usize,
        n_long: usize,
    },

    #[error("duplicate cell ({row}, {col})")]
    DuplicateCell { row: usize, col: usize },

    #[error("non-finite or out-of-range thickness {value} at ({row}, {col})")]
    BadThickness { row: usize, col: usize, value: f64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("sample {value} outside the distribution support")]
    OutsideSupport { value: f64 },

    #[error("{what} did not converge after {iters} iterations")]
    NoConvergence { what: &'static str, iters: usize },

    #[error("probability {0} not strictly inside (0, 1)")]
    Probability(f64),

    #[error("kernel matrix not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("all marginal fits failed: {0}")]
    AllFitsFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier, used by the CLI for machine-readable errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Geometry(_) => "geometry",
            Error::InvalidInput(_) => "invalid_input",
            Error::Csv { .. } => "csv",
            Error::OutOfRange { .. } => "out_of_range",
            Error::DuplicateCell { .. } => "duplicate_cell",
            Error::BadThickness { .. } => "bad_thickness",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::Degenerate(_) => "degenerate",
            Error::OutsideSupport { .. } => "outside_support",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Probability(_) => "probability",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::AllFitsFailed(_) => "all_fits_failed",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
