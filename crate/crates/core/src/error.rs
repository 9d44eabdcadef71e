use std::path::PathBuf;

use crate::numeric::NumericError;
use crate::query::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("{} entities missing from the type map: {}", .0.len(), .0.join(", "))]
    MissingTypes(Vec<String>),

    #[error("entity {label} declared with type {first} and again with {second}")]
    ConflictingType { label: String, first: String, second: String },

    #[error("entity {0} has no neighbors")]
    NoNeighbors(String),

    #[error("unknown entity {0}")]
    UnknownEntity(String),

    #[error("unknown relation {0}")]
    UnknownRelation(String),

    #[error("unknown entity type {0}")]
    UnknownType(String),

    #[error("invalid query: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidQuery(Vec<Violation>),

    #[error("could not realize a {structure} query after {attempts} attempts")]
    Unrealizable { structure: String, attempts: usize },

    #[error("hard negatives need a query with an intersection node")]
    NoIntersection,

    #[error("embedding of entity {0} has zero norm")]
    DegenerateEmbedding(String),

    #[error("degree pruning removed every entity")]
    EmptyAfterPrune,

    #[error("{0} score list is empty")]
    EmptyScores(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Divergence { epoch: usize, step: usize, detail: String },

    #[error(transparent)]
    Numeric(#[from] NumericError),

    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::Divergence { .. } | Error::DegenerateEmbedding(_))
    }
}
