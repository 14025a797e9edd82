use thiserror::Error;

use crate::domain::DomainError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Domain(#[from] DomainError),

    #[error("observation {observation} has zero probability after action {action}")]
    ImpossibleEvidence { action: usize, observation: usize },

    #[error("tree depth {found} does not match the required depth {expected}")]
    DepthMismatch { expected: usize, found: usize },

    #[error("trees in a set must share depth and branching (tree {index}: {reason})")]
    MixedTrees { index: usize, reason: String },

    #[error("malformed policy tree: {0}")]
    MalformedTree(String),

    #[error("problem too large: {what} needs {needed}, limit is {limit}")]
    LimitExceeded {
        what: &'static str,
        needed: u128,
        limit: u128,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("anchor sequence {index} is inconsistent with the model: {reason}")]
    BadAnchor { index: usize, reason: String },

    #[error("could not draw a novel tree after {attempts} attempts")]
    NoNovelTree { attempts: usize },

    #[error("found only {found} distinct known models out of {wanted} after {attempts} attempts")]
    KnownModelShortfall {
        wanted: usize,
        found: usize,
        attempts: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
