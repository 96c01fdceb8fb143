use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// `kappa = 0`: the stationary variance law collapses to a point mass at theta.
    #[error("deterministic-volatility limit (kappa = 0): no finite shape parameter")]
    DeterministicLimit,

    #[error("quadrature did not converge: estimated error {achieved:.3e} exceeds tolerance {requested:.3e} (value {value})")]
    Quadrature {
        value: f64,
        achieved: f64,
        requested: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite state in path {path} at step {step}")]
    NonFinite { path: usize, step: usize },

    #[error("fit did not converge after {iterations} iterations (best objective {objective}, b = {b}, c = {c})")]
    FitNotConverged {
        iterations: usize,
        objective: f64,
        b: f64,
        c: f64,
    },

    #[error("{0}")]
    Unsupported(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn domain(what: &'static str, value: f64) -> Error {
    Error::Domain { what, value }
}
