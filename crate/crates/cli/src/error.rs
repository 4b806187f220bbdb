use std::path::{Path, PathBuf};

use sizegraph_core::bundle::BuildError;
use sizegraph_core::{GraphError, IngestError, NmfError, PersistError, SkipGramError, WbsrError};
use thiserror::Error;

use crate::query::QueryError;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INVALID: u8 = 1;
    pub const IO: u8 = 2;
    pub const DEGENERATE: u8 = 3;
    pub const NO_PATH: u8 = 4;
    pub const UNKNOWN_BRAND: u8 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Persist { path: PathBuf, source: PersistError },
    #[error("{}: {source}", path.display())]
    Ingest { path: PathBuf, source: IngestError },
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("no bundle location: pass --bundle or set SIZEGRAPH_MODEL_DIR")]
    NoBundleLocation,
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Wbsr(#[from] WbsrError),
    #[error(transparent)]
    SkipGram(#[from] SkipGramError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn persist(path: &Path, source: PersistError) -> Self {
        match source {
            PersistError::Io(e) => Self::io(path, e),
            source => CliError::Persist {
                path: path.to_path_buf(),
                source,
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Bind { .. } => exit::IO,
            CliError::Ingest { source, .. } => match source {
                IngestError::Io(_) => exit::IO,
                _ => exit::INVALID,
            },
            CliError::Persist { .. } | CliError::Invalid(_) | CliError::NoBundleLocation => {
                exit::INVALID
            }
            CliError::Build(e) => build_code(e),
            CliError::Graph(e) => graph_code(e),
            CliError::Wbsr(e) => wbsr_code(e),
            CliError::SkipGram(e) => skipgram_code(e),
            CliError::Query(e) => e.exit_code(),
        }
    }
}

fn build_code(e: &BuildError) -> u8 {
    match e {
        BuildError::Nmf(NmfError::DegenerateMatrix) => exit::DEGENERATE,
        BuildError::Graph(g) => graph_code(g),
        BuildError::Ingest(IngestError::Io(_)) => exit::IO,
        _ => exit::INVALID,
    }
}

fn graph_code(e: &GraphError) -> u8 {
    match e {
        GraphError::DegenerateGraph(_) => exit::DEGENERATE,
        GraphError::UnknownBrand(_) => exit::UNKNOWN_BRAND,
        GraphError::InvalidPercentile(_) => exit::INVALID,
    }
}

pub(crate) fn wbsr_code(e: &WbsrError) -> u8 {
    match e {
        WbsrError::NoPath(..) | WbsrError::NoDirectEdge(..) => exit::NO_PATH,
        WbsrError::UnknownBrand(_) => exit::UNKNOWN_BRAND,
        WbsrError::InvalidHyperparams(_) => exit::INVALID,
    }
}

pub(crate) fn skipgram_code(e: &SkipGramError) -> u8 {
    match e {
        SkipGramError::UnknownPreference(_) => exit::UNKNOWN_BRAND,
        SkipGramError::NoCandidates => exit::NO_PATH,
        SkipGramError::InsufficientData => exit::DEGENERATE,
        SkipGramError::InvalidConfig(_) => exit::INVALID,
    }
}
