use std::io;

use thiserror::Error;

/// Errors raised by the extraction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no word reaches the minimum count of {min_count}")]
    EmptyVocabulary { min_count: usize },

    #[error("malformed model file (line {line}): {reason}")]
    MalformedModelFile { line: usize, reason: String },

    #[error("word not in vocabulary: {0:?}")]
    OutOfVocabulary(String),

    #[error("cosine is undefined for a zero-norm vector")]
    ZeroNormVector,

    #[error("vectors differ in length ({0} vs {1})")]
    DimensionMismatch(usize, usize),

    #[error("no word of reference group {0:?} is in the vocabulary")]
    EmptyGroupInVocabulary(String),

    #[error("every token is out of vocabulary")]
    AllTokensOov,

    #[error("unknown category: {0:?}")]
    UnknownCategory(String),

    #[error("sentence {0:?} is unclassifiable")]
    UnclassifiableSentence(String),

    #[error("no prediction for sentence {0:?}")]
    MissingPrediction(String),

    #[error("gold label {label:?} of sentence {sentence_id:?} is not a configured category")]
    UnknownGoldLabel { sentence_id: String, label: String },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed {kind} (line {line}): {reason}")]
    MalformedRecord {
        kind: &'static str,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
