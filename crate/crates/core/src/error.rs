use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),

    #[error("invalid outcome value {0}; expected -1, 0 or +1")]
    InvalidOutcome(i64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("degenerate model: no trials with both stations clicking")]
    DegenerateModel,

    #[error("post-selection is empty: no trials with both outcomes non-zero")]
    EmptyPostSelection,

    #[error("missing setting pair ({0}, {1})")]
    MissingSettingPair(String, String),

    #[error("insufficient setting grid: {0}")]
    InsufficientGrid(String),

    #[error("events for station {station} are not sorted by timestamp (record {index})")]
    UnsortedEvents { station: char, index: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: line {line}: {reason}")]
    MalformedRow {
        path: String,
        line: u64,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
