use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A learning rate was requested while the gradient energy is zero.
    #[error("learning rate undefined: {0}")]
    RateUndefined(String),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("numerical failure: {message} (residual {residual:e})")]
    NumericalFailure { message: String, residual: f64 },

    #[error("unsupported feasible set: {0}")]
    UnsupportedSet(String),

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("search space too large: {0}")]
    SizeLimit(String),

    #[error("stream error: {0}")]
    Stream(#[from] StreamError),

    /// An invariant that the engine guarantees was broken.
    #[error("internal contract violation: {0}")]
    ContractViolation(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidInput(msg.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StreamError {
    #[error("stream exhausted at round {round} (horizon {horizon})")]
    Exhausted { round: usize, horizon: usize },

    /// Each round reveals exactly one sub-gradient, at the decision played.
    #[error("round {round} queried out of order; expected round {expected}")]
    OutOfOrder { round: usize, expected: usize },

    #[error("decision has dimension {got}, stream expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub(crate) fn check_finite(what: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be finite and nonnegative, got {x}")))
    }
}
