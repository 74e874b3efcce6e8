use thiserror::Error;

use crate::geometry::Vector;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An inner iterative routine ran out of budget. `best` is the last iterate
    /// and `residual` its stopping measure at that point.
    #[error("{what} did not converge after {steps} steps (residual {residual:e})")]
    ConvergenceFailure {
        what: &'static str,
        steps: usize,
        residual: f64,
        best: Vector,
    },

    #[error("intersection appears empty (persistent violation {violation:e} after {sweeps} sweeps)")]
    Infeasible { sweeps: usize, violation: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("determinism violation: {0}")]
    Determinism(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// The innermost error, with iteration annotations stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root(),
            other => other,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidConfig(_) => "invalid_config",
            Error::ConvergenceFailure { .. } => "convergence_failure",
            Error::Infeasible { .. } => "infeasible",
            Error::Unsupported(_) => "unsupported",
            Error::Determinism(_) => "determinism_violation",
            Error::Io { .. } => "io",
            Error::AtIteration { .. } => unreachable!(),
        }
    }
}
