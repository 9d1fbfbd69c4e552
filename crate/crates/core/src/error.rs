use std::path::PathBuf;

use thiserror::Error;

use crate::data::Year;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {message}")]
    Ingestion {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{file}:{line}: unknown {kind} `{key}`")]
    Resolution {
        file: PathBuf,
        line: usize,
        kind: &'static str,
        key: String,
    },

    #[error("cannot parse date `{raw}`: {reason}")]
    DateParse { raw: String, reason: &'static str },

    #[error("invalid interval: {0}")]
    Interval(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual} ({what})")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("no embedding for sentence key {key} (`{sentence}`)")]
    MissingEmbedding { key: String, sentence: String },

    #[error("non-finite embedding for sentence `{sentence}`")]
    NonFiniteEmbedding { sentence: String },

    #[error("embedding table {path}: {message}")]
    EmbeddingTable { path: PathBuf, message: String },

    #[error("negative sampling failed: {0}")]
    Sampling(String),

    #[error(
        "inductive split incomplete: removed {valid_achieved}/{valid_target} valid and \
         {test_achieved}/{test_target} test entities before candidates ran out"
    )]
    PartialSplit {
        valid_achieved: usize,
        valid_target: usize,
        test_achieved: usize,
        test_target: usize,
    },

    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("year {year} is outside the time range [{min}, {max}]")]
    YearOutOfRange { year: Year, min: Year, max: Year },

    #[error("evaluation set is empty")]
    EmptyEvaluation,

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for failures caused by numerics rather than by input data.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::NonFiniteEmbedding { .. }
        )
    }
}
