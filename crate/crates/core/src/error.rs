use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),

    #[error("subject `{0}` is already enrolled")]
    Conflict(String),

    #[error("out-of-order sighting for `{subject_id}`: t={timestamp_s} precedes t={last_seen_s}")]
    Ordering {
        subject_id: String,
        timestamp_s: f64,
        last_seen_s: f64,
    },

    #[error("sighting for `{actual}` routed to session of `{expected}`")]
    Routing { expected: String, actual: String },

    #[error("session state error: {0}")]
    State(String),

    #[error("session for `{0}` has no accepted sightings")]
    EmptySession(String),

    #[error("{path}: {message}")]
    Field { path: String, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Field {
            path: path.into(),
            message: message.into(),
        }
    }
}
