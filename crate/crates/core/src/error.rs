use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph contains a directed cycle through node `{0}`")]
    Cyclic(String),

    #[error(
        "candidate space has {edges} possible edges (2^{edges} graphs); enumeration is capped at {cap} edges"
    )]
    EnumerationCap { edges: usize, cap: usize },

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {what} at iteration {iteration}")]
    NonFinite { what: String, iteration: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("missing variational state for node `{0}`")]
    MissingState(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: u64,
        column: String,
        message: String,
    },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
