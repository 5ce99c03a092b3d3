use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value or argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("unknown company {name:?}; known companies: {known:?}")]
    UnknownCompany { name: String, known: Vec<String> },

    #[error("training of {model} diverged at epoch {epoch}: {message}")]
    Training {
        model: String,
        epoch: usize,
        message: String,
    },

    #[error("feature-space mismatch for model {model}: {message}")]
    FeatureMismatch { model: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
