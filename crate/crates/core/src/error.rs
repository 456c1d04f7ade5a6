//! Crate-wide error type.

/// Errors produced by the simulation, estimation and control layers.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    /// Invalid configuration or degenerate construction parameters.
    #[error("config error: {0}")]
    Config(String),
    /// Query outside the supported domain (e.g. trajectory time range).
    #[error("out of range: {0}")]
    OutOfRange(String),
    /// Scan-to-map registration had too few usable correspondences.
    #[error("registration degenerate: {0} correspondences (need {1})")]
    RegistrationDegenerate(usize, usize),
    /// Not enough data to evaluate a metric.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// A non-finite value reached an interface that requires finite inputs.
    #[error("non-finite input: {0}")]
    NonFinite(String),
    /// Linear system could not be solved (singular Hessian or similar).
    #[error("singular system: {0}")]
    Singular(String),
    /// File parsing failed.
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
