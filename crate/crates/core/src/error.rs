use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{what} = {value} is outside the allowed interval [{min}, {max}]")]
    Range {
        what: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },

    #[error("corrupt weight code: {0}")]
    CorruptCode(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("inconsistent stage configuration: {0}")]
    InconsistentStage(String),

    #[error("malformed trace at line {line}: {reason}")]
    Trace { line: usize, reason: String },

    #[error("bad plane image: {0}")]
    Image(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
