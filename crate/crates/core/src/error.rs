use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input value.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("sequencing error: agent {agent} recorded slot {slot} after slot {last}")]
    Sequencing { agent: usize, slot: u64, last: u64 },

    #[error("communication schedule exhausted: budget never reaches {needed} pulls")]
    ScheduleExhausted { needed: u64 },

    #[error("cannot construct network: {0}")]
    Construction(String),

    #[error("conductance for {n} agents needs brute force above the cap of {cap}")]
    UnsupportedSize { n: usize, cap: usize },

    #[error("rumor spreading did not complete within {cap} steps")]
    SpreadingCapExceeded { cap: u64 },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("scan for {what} exhausted after {bound} indices")]
    ScanExhausted { what: &'static str, bound: u64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
