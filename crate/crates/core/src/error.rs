use std::path::PathBuf;

use thiserror::Error;

use crate::domain::CategoryId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("pool exhausted: {0}")]
    PoolExhausted(String),

    #[error("label-space overlap could not be satisfied after {attempts} attempts")]
    ImpossibleOverlap { attempts: usize },

    #[error("no held-out subclasses available in the taxonomy")]
    NoHeldOutSubclasses,

    #[error("{path}: row {row}, column {column}: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("category {category} is outside the declared label space{context}")]
    LabelOutsideSpace { category: CategoryId, context: String },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),

    #[error("invalid credibility weights: {0}")]
    InvalidWeights(String),

    #[error("index {index} is out of range for a public dataset of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("classifier has not been trained")]
    Untrained,

    #[error("participant {participant}: {source}")]
    Participant {
        participant: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid theory parameters: {0}")]
    InvalidTheoryParams(String),

    #[error("missing artifacts: {0}")]
    MissingArtifacts(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn for_participant(self, participant: u32) -> Error {
        match self {
            e @ Error::Participant { .. } => e,
            other => Error::Participant {
                participant,
                source: Box::new(other),
            },
        }
    }
}
