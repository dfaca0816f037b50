use thiserror::Error;

use crate::solver::TraceRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Invalid instance, pairing, or argument.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// The step-size / inertia schedule admits no Lyapunov weight.
    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),

    /// A non-finite value showed up; `trace` holds every record computed before it.
    #[error("iteration diverged at k = {iteration}: {what} is not finite")]
    Diverged {
        iteration: usize,
        what: &'static str,
        trace: Vec<TraceRecord>,
    },

    #[error("trace too short: need at least {needed} records, found {found}")]
    TraceTooShort { needed: usize, found: usize },

    /// Grid oracle could not certify its answer (e.g. incumbent on the outer boundary).
    #[error("oracle inconclusive: {0}")]
    Inconclusive(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
