use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("no feasible labeling")]
    NoFeasibleLabeling,
    #[error("initialization error: {0}")]
    Initialization(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("generation error: {0}")]
    Generation(String),
    #[error("modeling error: {0}")]
    Modeling(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("divergence is infinite (absolute continuity violated)")]
    InfiniteDivergence,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
