use thiserror::Error;

pub type Result<T> = std::result::Result<T, LspcError>;

#[derive(Debug, Error)]
pub enum LspcError {
    /// Input of the wrong dimension or shape.
    #[error("rejected input: {0}")]
    Shape(String),
    /// API misuse, e.g. a backward pass with a cache from another network.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A NaN or infinity showed up where a finite value is required.
    #[error("numeric error in {what}")]
    Numeric { what: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("no feasible policy: {0}")]
    Infeasible(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LspcError {
    pub fn numeric(what: impl Into<String>) -> Self {
        LspcError::Numeric { what: what.into() }
    }
}
