use thiserror::Error;

use crate::catalog::EventKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SizeError {
    #[error("size {0} is not on the 0.5 grid")]
    OffGrid(f64),
    #[error("size {0} is outside [1, 15]")]
    OutOfRange(f64),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read event source: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv header is unreadable: {0}")]
    CsvHeader(String),
    #[error("no {0} events in the window; importance is undefined")]
    InsufficientEvents(EventKind),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NmfError {
    #[error("rank {rank} exceeds min(m, n) = {max}")]
    RankTooLarge { rank: usize, max: usize },
    #[error("matrix has no non-zero entries")]
    DegenerateMatrix,
    #[error("invalid factorization config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),
    #[error("unknown brand {0:?}")]
    UnknownBrand(String),
    #[error("percentile {0} must lie in (0, 100)")]
    InvalidPercentile(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WbsrError {
    #[error("no direct edge between {0:?} and {1:?}")]
    NoDirectEdge(String, String),
    #[error("no path of length <= 2 from {0:?} to {1:?}")]
    NoPath(String, String),
    #[error("unknown brand {0:?}")]
    UnknownBrand(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkipGramError {
    #[error("no (center, context) pair to train on")]
    InsufficientData,
    #[error("preference word {0:?} is not in the vocabulary")]
    UnknownPreference(String),
    #[error("none of the candidate sizes is in the vocabulary")]
    NoCandidates,
    #[error("invalid skip-gram config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("document format version {found} is newer than supported version {supported}")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("invalid document: {0}")]
    Invalid(String),
}
