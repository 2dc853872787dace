use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("law has zero variance ({0:e})")]
    ZeroVariance(f64),

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("quadrature order {0} exceeds the supported maximum of 200")]
    QuadratureOverflow(usize),

    #[error("n = {0} exceeds the enumeration limit of 24")]
    TooLarge(usize),

    #[error("infeasible alpha = {0}")]
    InfeasibleAlpha(f64),

    #[error("Gram matrix is singular (det = {0:e})")]
    SingularGram(f64),

    #[error("barrier Newton stalled after {iterations} iterations at {last:?} (gradient norm {grad_norm:e})")]
    BarrierStall { iterations: usize, last: [f64; 3], grad_norm: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
