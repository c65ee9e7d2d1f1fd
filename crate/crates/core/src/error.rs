use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid quadrature order {0}: expected 1..=64")]
    InvalidOrder(usize),

    #[error("degenerate interval [{a}, {b}]: expected a < b")]
    DegenerateInterval { a: f64, b: f64 },

    #[error("non-finite value {value} produced by {context}")]
    NonFinite { context: &'static str, value: f64 },

    #[error("invalid variance {0}: increments need dt > 0")]
    InvalidVariance(f64),

    #[error("invalid dimension {0}")]
    InvalidDimension(usize),

    #[error("query time {t} is not in [0, {horizon})")]
    InvalidTime { t: f64, horizon: f64 },

    #[error("kernel denominator {0:e} is not strictly positive")]
    SingularKernel(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("error bound not applicable: {0}")]
    TheoremNotApplicable(String),

    #[error("missing declared bound constants: {0}")]
    MissingBounds(String),

    #[error("deterministic oracle unavailable: {0}")]
    OracleUnavailable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
