use thiserror::Error;

/// Errors raised by the toolkit. Every variant carries enough context to be
/// shown to a user verbatim.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("block size d = {0} is not allowed: complete linear vector-field systems exist only on the parallelizable spheres S^0, S^1, S^3, S^7 (d in {{1, 2, 4, 8}})")]
    UnsupportedBlockSize(usize),

    #[error("{what} must be a unit vector (|v| = {norm:.15})")]
    NotUnit { what: &'static str, norm: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("excluded parameter: {0}")]
    ExcludedParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("positivity violated at theta = {theta:?} (value {value:e})")]
    Positivity { theta: Vec<f64>, value: f64 },

    #[error("point is not interior to the body (gauge = {0})")]
    NotInterior(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
