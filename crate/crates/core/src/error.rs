use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Training,
    Other,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed row: {message}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("line {line}: rating {rating} outside scale [{lo}, {hi}]")]
    RatingOutOfScale {
        line: usize,
        rating: f64,
        lo: f64,
        hi: f64,
    },
    #[error("line {line}: duplicate (user, item) pair ({user}, {item})")]
    DuplicatePair {
        line: usize,
        user: String,
        item: String,
    },
    #[error("user {user} has no value for attribute {attribute}")]
    MissingAttribute { user: String, attribute: String },
    #[error("attribute {0} has a single observed category")]
    SingleCategory(String),
    #[error("group {0} is empty")]
    EmptyGroup(u8),
    #[error("empty result: {0}")]
    Empty(String),
    #[error("no score for pair ({user}, {item})")]
    MissingPair { user: String, item: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: train RMSE is {rmse}")]
    Divergence { epoch: usize, rmse: f64 },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("incompatible combination: {0}")]
    Incompatible(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Incompatible(_) | Error::InvalidArgument(_) => {
                ErrorKind::Config
            }
            Error::MalformedRow { .. }
            | Error::RatingOutOfScale { .. }
            | Error::DuplicatePair { .. }
            | Error::MissingAttribute { .. }
            | Error::SingleCategory(_)
            | Error::EmptyGroup(_)
            | Error::Empty(_)
            | Error::MissingPair { .. } => ErrorKind::Data,
            Error::Divergence { .. } | Error::NonFinite(_) => ErrorKind::Training,
            Error::Io { .. } => ErrorKind::Other,
            Error::Stage { source, .. } => source.kind(),
        }
    }
}
