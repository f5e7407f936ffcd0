use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("loss at node {node} is not strictly convex")]
    NotStrictlyConvex { node: usize },

    #[error("aggregate loss over the given subset is not strictly convex")]
    AggregateNotStrictlyConvex,

    #[error("empty cluster {0}")]
    EmptyCluster(usize),

    #[error("linear system is singular or not positive definite")]
    SingularSystem,

    #[error("solver diverged at iteration {iter}: objective {objective} exceeds guard {guard}")]
    Diverged { iter: usize, objective: f64, guard: f64 },

    #[error("no path step has an unmerged pair of centroids")]
    NoUnmergedStep,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem
                | Error::Diverged { .. }
                | Error::NotStrictlyConvex { .. }
                | Error::AggregateNotStrictlyConvex
                | Error::NoUnmergedStep
        )
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
