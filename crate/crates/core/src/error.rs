use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("nodes {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed payload: {0}")]
    Payload(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("transport lost payload {from} -> {to} in round {round}")]
    TransportLoss {
        from: usize,
        to: usize,
        round: usize,
    },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("diverged at round {round}: dist_to_opt = {dist}")]
    Divergence { round: usize, dist: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
