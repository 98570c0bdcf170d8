use thiserror::Error;

/// Errors raised by geometry kernels, decompositions and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("tangent vector is not based at the given point")]
    BaseMismatch,

    #[error("manifold descriptor mismatch: {0}")]
    DescriptorMismatch(String),

    #[error("point {0:?} lies at or beyond the cut locus of the base point")]
    CutLocus(Option<Vec<usize>>),

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid tangent vector: {0}")]
    InvalidTangent(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("curvature eigenvalue {kappa} at entry {index:?} is at least pi^2; choose a base point closer to the data")]
    CurvatureTooLarge { kappa: f64, index: Vec<usize> },

    #[error("normal system is not positive definite (relative residual {residual:e})")]
    NotPositiveDefinite { residual: f64 },

    #[error("iteration did not converge after {iterations} steps (last step {last_step:e})")]
    NotConverged { iterations: usize, last_step: f64 },

    #[error("gradient descent diverged at iteration {iteration} (loss {loss:e}, initial {initial:e})")]
    Diverged {
        iteration: usize,
        loss: f64,
        initial: f64,
    },

    #[error("no stable step size among the candidates 2^0 .. 2^-20")]
    NoStableStep,

    #[error("bad magic bytes, not an MVT file")]
    BadMagic,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the error stems from bad input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::BaseMismatch
                | Error::DescriptorMismatch(_)
                | Error::InvalidPoint(_)
                | Error::InvalidTangent(_)
                | Error::InvalidArgument(_)
                | Error::BadMagic
                | Error::ShapeMismatch(_)
                | Error::InvariantViolation(_)
                | Error::NonFinite(_)
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
