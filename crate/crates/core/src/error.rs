use thiserror::Error;

pub type Result<T, E = SlsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SlsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The equality constraints cannot be met; `residual` is the best
    /// achievable violation.
    #[error("infeasible {what}: residual {residual:.3e}")]
    Infeasible { what: String, residual: f64 },

    #[error("unbounded: {0}")]
    Unbounded(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid document: {0}")]
    Json(#[from] serde_json::Error),
}

impl SlsError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        SlsError::Dimension(msg.into())
    }
}
