use thiserror::Error;

#[derive(Debug, Error)]
pub enum CdError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("oracle not available: {0}")]
    UnsupportedOracle(String),

    #[error("degenerate statistic: {0}")]
    DegenerateStatistic(String),

    #[error("condition violated: {0}")]
    ConditionViolated(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CdError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CdError::InvalidInput(msg.into()))
}
