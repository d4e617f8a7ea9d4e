use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The probabilistic uncertainty multiplier `1 - eps + 2 eps delta0`
    /// is not positive, so the planned interference would be non-positive.
    #[error("degenerate uncertainty multiplier {multiplier} for user {user}, channel {channel}")]
    DegenerateMultiplier {
        user: usize,
        channel: usize,
        multiplier: f64,
    },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("malformed scenario document: {0}")]
    Parse(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
