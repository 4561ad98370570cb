use thiserror::Error;

/// Errors raised by the laboratory's constructors, simulators and checkers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid density parameters: {0}")]
    Construction(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("tilt left no representable mass (all log-weights are -inf or non-finite)")]
    DegenerateTilt,

    #[error("covariance is singular: smallest eigenvalue {min_eigenvalue:.3e} <= {threshold:.1e}")]
    DegenerateCovariance { min_eigenvalue: f64, threshold: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("pairwise sum over {n} atoms exceeds the cap of {cap}; subsample first")]
    PairSumCap { n: usize, cap: usize },

    #[error("exact invariant violated: {0}")]
    InvariantViolated(String),

    #[error("graph is disconnected even after raising k to {k}")]
    DisconnectedGraph { k: usize },

    #[error("malformed atomic-measure CSV: {0}")]
    Format(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
