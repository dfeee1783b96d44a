use thiserror::Error;

pub type Result<T, E = DimError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DimError {
    /// Input outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// The requested quantity is not available at the materialized depth.
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// An integral or sum that does not converge.
    #[error("divergent: {0}")]
    Divergent(String),
    #[error("construction failed: {0}")]
    ConstructionFailed(String),
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DimError {
    pub fn domain(msg: impl Into<String>) -> Self {
        Self::Domain(msg.into())
    }

    pub fn unavailable(msg: impl Into<String>) -> Self {
        Self::Unavailable(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Self::Invalid(msg.into())
    }
}
