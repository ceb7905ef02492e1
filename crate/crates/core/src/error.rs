use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },

    #[error("duplicate claim id `{0}`")]
    DuplicateClaim(String),

    #[error("evidence references unknown claim ids: {}", .0.join(", "))]
    OrphanEvidence(Vec<String>),

    #[error("duplicate evidence rank {rank} for claim `{claim_id}`")]
    DuplicateRank { claim_id: String, rank: u32 },

    #[error("claim `{claim_id}` has {count} evidence documents (at most {max} allowed)")]
    TooManyDocuments { claim_id: String, count: usize, max: usize },

    #[error("claim `{0}` has no gold label")]
    Unlabeled(String),

    #[error("claim `{0}` has no evidence documents")]
    MissingEvidence(String),

    #[error("invalid value for `{field}`: {message}")]
    InvalidField { field: &'static str, message: String },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("unknown evidence strategy `{0}` (expected full-document, top-k-bm25 or top-k-semantic)")]
    UnknownStrategy(String),

    #[error("embedding failed for claim `{claim_id}` (batch {batch:?}): {source}")]
    Embedding {
        claim_id: String,
        batch: std::ops::Range<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("embedding provider: {0}")]
    Provider(String),

    #[error("vector dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("generation failed for claim `{claim_id}` after {attempts} attempt(s): {message}")]
    Generation {
        claim_id: String,
        attempts: u32,
        message: String,
    },

    #[error("batch aborted: {failed} of {total} items failed (threshold {threshold})")]
    BatchAborted { failed: usize, total: usize, threshold: f64 },

    #[error("length mismatch: {gold} gold labels vs {predicted} predictions")]
    LengthMismatch { gold: usize, predicted: usize },

    #[error("cannot evaluate an empty prediction set")]
    EmptyEvaluation,

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("every grid cell failed: {}", .0.join("; "))]
    GridFailed(Vec<String>),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidField {
            field,
            message: message.into(),
        }
    }

    pub(crate) fn at_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}
