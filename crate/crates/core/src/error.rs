use std::io;
use std::path::PathBuf;

use crate::graph::UserId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Domain,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("user {0} has no label")]
    UnlabeledEndpoint(UserId),

    #[error("user {0} is labeled more than once")]
    DuplicateLabel(UserId),

    #[error("class index {class} out of range for k={k}")]
    ClassOutOfRange { class: usize, k: usize },

    #[error("event seq {seq} does not follow seq {prev}")]
    OutOfOrder { prev: u64, seq: u64 },

    #[error("event seq {seq}: edge between two new users ({a} and {b})")]
    NewToNewEdge { seq: u64, a: UserId, b: UserId },

    #[error("event seq {seq}: user {user} is outside the new-user id range")]
    NotANewUser { seq: u64, user: UserId },

    #[error("unknown preexisting user {0}")]
    UnknownUser(UserId),

    #[error("no attachment probability for user {user} ({direction})")]
    MissingTableEntry { user: UserId, direction: &'static str },

    #[error("zero normalizing mass for class {class} ({direction}); alpha must be positive when counts are empty")]
    ZeroDenominator { class: usize, direction: &'static str },

    #[error("step {step}: every candidate has zero attachment weight (class {class}, {direction})")]
    ZeroDrawDistribution {
        step: usize,
        class: usize,
        direction: &'static str,
    },

    #[error("class count mismatch: expected k={expected}, got {got}")]
    ClassMismatch { expected: usize, got: usize },

    #[error("every class has zero likelihood for user {0}")]
    ImpossibleEvidence(UserId),

    #[error("oracle cap exceeded: {users} new users in stream, cap is {cap}")]
    CapExceeded { users: usize, cap: usize },

    #[error("user {0} does not appear in the stream")]
    UserNotInStream(UserId),

    #[error("{0}")]
    Degenerate(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } | Error::Parse { .. } => ErrorKind::Io,
            Error::Config(_) => ErrorKind::Config,
            _ => ErrorKind::Domain,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
