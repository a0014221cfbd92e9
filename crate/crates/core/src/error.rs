use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Every failure the pipeline can report. Variant names double as the
/// machine-readable error kind printed by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    // corpus
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("inconsistent vocabulary: {0}")]
    InconsistentVocab(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },
    #[error("non-finite value at row {row}, col {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    // gnn
    #[error("invalid gnn config: {0}")]
    InvalidConfig(String),
    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("batch has no positive pairs")]
    NoPositivePairs,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("graph has no edges")]
    EdgelessGraph,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    DivergedTraining { epoch: usize, loss: f64 },

    // cluster
    #[error("invalid cluster size {cluster_size} for {n} tokens")]
    InvalidClusterSize { cluster_size: usize, n: usize },
    #[error("token {token} out of range for vocabulary of {vocab_size}")]
    OutOfRangeToken { token: usize, vocab_size: usize },

    // analysis
    #[error("no hallucinated objects in any record")]
    NoHallucinations,
    #[error("record {0} has an empty truth set")]
    EmptyTruth(String),
    #[error("no responses mention any object")]
    NoResponsesWithObjects,
    #[error("image {0} has no token grid")]
    MissingGrid(String),

    // vtd
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("token {token} missing from embedding table of {rows} rows")]
    MissingToken { token: usize, rows: usize },

    // config
    #[error("config error: {0}")]
    Config(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Name of the variant, e.g. `EdgelessGraph`.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "Io",
            Error::MalformedRecord { .. } => "MalformedRecord",
            Error::InconsistentVocab(_) => "InconsistentVocab",
            Error::BadMagic { .. } => "BadMagic",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::NonFiniteActivation { .. } => "NonFiniteActivation",
            Error::NoPositivePairs => "NoPositivePairs",
            Error::NonFiniteGradient => "NonFiniteGradient",
            Error::EdgelessGraph => "EdgelessGraph",
            Error::DivergedTraining { .. } => "DivergedTraining",
            Error::InvalidClusterSize { .. } => "InvalidClusterSize",
            Error::OutOfRangeToken { .. } => "OutOfRangeToken",
            Error::NoHallucinations => "NoHallucinations",
            Error::EmptyTruth(_) => "EmptyTruth",
            Error::NoResponsesWithObjects => "NoResponsesWithObjects",
            Error::MissingGrid(_) => "MissingGrid",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::MissingToken { .. } => "MissingToken",
            Error::Config(_) => "Config",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
