use nalgebra::DMatrix;
use thiserror::Error;

/// Errors produced by the scan-matching library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("target cloud has no normals (required for point-to-plane residuals)")]
    MissingNormals,

    #[error("scene has no curvilinear abscissae (required for curve bound checks)")]
    MissingAbscissae,

    #[error("scene has no curvature bound (required for bound checks)")]
    MissingCurvature,

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    /// The normal-equation matrix is rank deficient. Carries an orthonormal
    /// basis of the unobservable motion directions so callers can fall back
    /// to a reduced solve.
    #[error("singular system: {} unobservable direction(s)", null_basis.ncols())]
    SingularSystem { null_basis: DMatrix<f64> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("too many estimator failures: {failed} of {total} trials")]
    TrialFailures { failed: usize, total: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
