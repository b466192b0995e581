use thiserror::Error;

/// Errors produced by the surrogate, acquisition and optimization layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite (last jitter tried: {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("posterior variance {variance:e} is too small for sigma-derivatives")]
    DegenerateVariance { variance: f64 },

    #[error("observation {index} is immutable; only fantasy observations can be perturbed")]
    ImmutableObservation { index: usize },

    #[error("dimension {dim} exceeds the {max} dimensions of the direction-number table")]
    UnsupportedDimension { dim: usize, max: usize },

    #[error("rollout estimator degraded: {flagged} of {total} trajectories flagged")]
    EstimatorDegraded { flagged: usize, total: usize },

    #[error("objective returned a non-finite value {value} at {x:?}")]
    NonFiniteObjective { x: Vec<f64>, value: f64 },

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("manifest error at line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
