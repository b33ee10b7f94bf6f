use thiserror::Error;

/// Errors produced by the registration pipeline and its building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("insufficient points: requested {requested} neighbors but only {available} available")]
    InsufficientPoints { requested: usize, available: usize },

    #[error("empty point set")]
    EmptyPointSet,

    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),

    #[error("normals length {normals} does not match points length {points}")]
    NormalsMismatch { points: usize, normals: usize },

    #[error("zero-length normal at index {0}")]
    ZeroNormal(usize),

    #[error("matrix is not a proper rotation (orthonormality error {orthonormality:e}, det {det})")]
    NotARotation { orthonormality: f64, det: f64 },

    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),

    #[error("degenerate cloud: no mutual neighbors")]
    DegenerateCloud,

    #[error("zero shape scale")]
    ZeroShapeScale,

    #[error("degenerate correspondence")]
    DegenerateCorrespondence,

    #[error("insufficient correspondence: {matched} matched cells, need at least {required}")]
    InsufficientCorrespondence { matched: usize, required: usize },

    #[error("zero offset must be a grid member (translation steps must be odd, got {0})")]
    EvenTranslationSteps(usize),

    #[error("registration failed: no valid correspondence")]
    RegistrationFailed,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
