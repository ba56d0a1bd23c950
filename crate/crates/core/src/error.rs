use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Riccati iteration did not converge after {iterations} sweeps (change {change:.3e}, residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        change: f64,
        residual: f64,
    },

    #[error("existence condition violated: product of (1 - gamma) = {product:.6} exceeds |lambda|_min^(2T) = {threshold:.6}")]
    ConditionViolated { product: f64, threshold: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("pair (A, B) is not stabilizable")]
    NotStabilizable,

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("unknown agent {0}")]
    UnknownAgent(usize),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no reference opinion for malicious agent {0}")]
    MissingReference(usize),

    #[error("no per-neighbor deviation bound for malicious neighbor #{0}")]
    MissingPerNeighborBound(usize),

    #[error("peak is already at the lowest level")]
    AtFloor,

    #[error("peak is already at the highest level")]
    AtCeiling,

    #[error("infeasible bounds at phase {phase}: lower {lower} > upper {upper}")]
    InfeasibleBounds { phase: usize, lower: f64, upper: f64 },

    #[error("trace is empty")]
    EmptyTrace,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
