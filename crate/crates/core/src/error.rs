use thiserror::Error;

/// Errors raised by the control and perception pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rotation matrix is not orthonormal with determinant +1")]
    InvalidRotation,
    #[error("point lies behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("feature set is degenerate (condition number {0:e})")]
    DegenerateFeatures(f64),
    #[error("combined image/robot Jacobian is rank deficient")]
    SingularCombined,
    #[error("grid dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("bounding box is empty after shrinking")]
    EmptyBox,
    #[error("no valid depth inside the bounding box")]
    NoValidDepth,
    #[error("no target memorized yet: at least one detection is required")]
    NoTargetYet,
    #[error("no detection within the first {0} ticks")]
    FirstDetectionTimeout(usize),
    #[error("metrics requested for an empty log")]
    EmptyLog,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
