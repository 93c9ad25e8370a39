//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed corpus line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("empty document: {0}")]
    EmptyDocument(String),

    #[error("empty reference: {0}")]
    EmptyReference(String),

    #[error("sentence {index} of document {id} has no tokens")]
    EmptySentence { id: String, index: usize },

    #[error("duplicate document id: {0}")]
    DuplicateId(String),

    #[error("planted position {position} out of range for {n_sentences} sentences")]
    PlantedOutOfRange { position: usize, n_sentences: usize },

    #[error("sentence index {index} out of range for document with {n_sentences} sentences")]
    IndexOutOfRange { index: usize, n_sentences: usize },

    #[error("cannot enumerate sequences for {n_sentences} sentences (limit {limit})")]
    EnumerationTooLarge { n_sentences: usize, limit: usize },

    #[error("log-probability is not finite for the given index sequence")]
    NonFiniteLogProb,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("encoder state does not belong to this model")]
    StateMismatch,

    #[error("non-finite gradient entry at index {0}")]
    NonFiniteGradient(usize),

    #[error("embedding file line {line}: {message}")]
    EmbeddingFile { line: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
