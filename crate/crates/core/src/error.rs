use thiserror::Error;

/// Errors raised by the numeric layers of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("series does not converge for q = {q} (need |q| < 1)")]
    NonConvergent { q: f64 },

    #[error("product truncation did not reach tolerance within k_max = {k_max} factors")]
    TruncationExceeded { k_max: usize },

    #[error("denominator factor {value} at k = {k} is not positive")]
    DivergentTerm { k: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid time arguments: {0}")]
    InvalidTime(String),

    #[error("state {value} outside the support [{lo}, {hi}]")]
    InvalidState { value: f64, lo: f64, hi: f64 },

    #[error("unknown process '{0}'")]
    UnknownProcess(String),

    #[error("density integrates to {mass}, not 1")]
    NotNormalized { mass: f64 },

    #[error("density is not finite at x = {x}")]
    NonFinite { x: f64 },

    #[error("invalid initial condition: {0}")]
    InvalidInit(String),

    #[error("jump threshold must be positive, got {0}")]
    InvalidThreshold(f64),

    #[error("rescaled point leaves the state space: {coordinate} = {value}")]
    OutOfSupport { coordinate: &'static str, value: f64 },

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("argument {re} + {im}i lies on the branch cut [{cut_start}, inf)")]
    BranchCut { re: f64, im: f64, cut_start: f64 },

    #[error("Stieltjes inversion ladder does not converge: {0:?}")]
    NonConvergentLadder(Vec<f64>),
}

pub type Result<T> = std::result::Result<T, Error>;
