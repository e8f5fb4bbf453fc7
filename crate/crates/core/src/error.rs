use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("bad partition: {0}")]
    BadPartition(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("simulation error: {0}")]
    Sim(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("extraction error: {0}")]
    Extract(String),
    #[error("interpretation error: {0}")]
    Interpret(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}
