use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside its admissible domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An argument violates an operation's precondition (ordering, support).
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature ran out of refinement levels.
    #[error("quadrature did not converge: estimate {estimate:e}, relative error {rel_error:e}")]
    NonConvergence { estimate: f64, rel_error: f64 },

    /// A quantity required by the operation is infinite under the prior.
    #[error("infinite moment: {0}")]
    InfiniteMoment(String),

    /// A probability needed as a divisor is too small to give a stable ratio.
    #[error("ill-conditioned: {0}")]
    IllConditioned(String),

    /// Writing output failed.
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Numerical (as opposed to input) failure.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonConvergence { .. } | Error::IllConditioned(_))
    }
}
