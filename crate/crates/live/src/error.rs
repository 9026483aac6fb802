use thiserror::Error;

pub type Result<T, E = LiveError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LiveError {
    #[error(transparent)]
    Core(#[from] mtirl::Error),

    #[error("invalid session setting {0}")]
    Invalid(String),

    #[error("no query is open")]
    NoOpenQuery,

    #[error("unknown session `{0}`")]
    UnknownSession(String),

    #[error("session is {0}, cannot {1}")]
    WrongState(&'static str, &'static str),

    #[error("session has shut down")]
    Closed,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
