use thiserror::Error;

/// Errors raised by the estimation toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    /// The erf⁻¹ argument reached the saturation guard; the caller decides
    /// whether to clamp, retry with more pilots, or drop the trial.
    #[error("erf_inv argument {0} saturated (|p| >= 1 - 1e-15)")]
    Saturated(f64),

    #[error("cell probability underflows to zero")]
    EmptyCell,

    #[error("invalid quantizer: {0}")]
    InvalidQuantizer(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("degenerate pilot: {0}")]
    DegeneratePilot(String),

    #[error("not converged after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("singular Fisher information matrix")]
    SingularFisher,

    #[error("insufficient quantizer resolution: {0}")]
    InsufficientResolution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
