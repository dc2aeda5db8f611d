//! Error types shared across the core crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {msg}")]
    MalformedLine { line: usize, msg: String },

    #[error("line {line}: odd qualifier tail ({ntokens} tokens after the main triple)")]
    OddQualifierTail { line: usize, ntokens: usize },

    #[error("line {line}: duplicate qualifier pair ({qr}, {qe}) in one fact")]
    DuplicateQualifier { line: usize, qr: String, qe: String },

    #[error("unknown {kind} label {label:?}")]
    UnknownLabel { kind: &'static str, label: String },

    #[error("query parse error: {0}")]
    QueryParse(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("unsupported query for the DP engine: {0}")]
    UnsupportedQuery(String),

    #[error("cardinality count overflowed 64-bit range")]
    CountOverflow,

    #[error("enumeration budget exceeded ({0})")]
    EnumerationBudget(String),

    #[error("generation exhausted for {what} after {attempts} attempts")]
    GenerationExhausted { what: String, attempts: usize },

    #[error("sample count must be positive")]
    ZeroSamples,

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error("q-error is undefined for non-positive input {0}")]
    NonPositiveCardinality(f64),
}
