use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("cholesky factorization failed at pivot {pivot} after jitter {jitter:e}")]
    Factorization { pivot: usize, jitter: f64 },

    #[error("quadrature did not reach tolerance: estimate {estimate}, error {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("trajectory blew up at step {step}: max |u| = {max_abs}")]
    BlowUp { step: usize, max_abs: f64 },

    #[error("estimate undefined: {0}")]
    Undefined(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
