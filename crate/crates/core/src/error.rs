//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("malformed metadata in {path}: {reason}")]
    MalformedMetadata { path: PathBuf, reason: String },

    #[error("size mismatch in {path}: expected {expected} bytes, found {actual}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("document offsets are not monotone at position {position}")]
    NonMonotoneOffsets { position: usize },

    #[error("invalid document offsets: {0}")]
    InvalidOffsets(String),

    #[error("document {doc} is empty")]
    EmptyDocument { doc: usize },

    #[error("row {row} has L2 norm {norm}, expected unit norm within {tolerance}")]
    NotNormalized { row: usize, norm: f32, tolerance: f32 },

    #[error("token id {token} at row {row} exceeds vocabulary size {vocab_size}")]
    TokenOutOfRange {
        row: usize,
        token: u32,
        vocab_size: u32,
    },

    #[error("query {query} has {len} tokens, allowed range is 1..={max}")]
    QueryLength { query: String, len: usize, max: usize },

    #[error("parse error in {path} line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("infeasible centroid budget: {budget} < {tokens} token types")]
    InfeasibleBudget { budget: usize, tokens: usize },

    #[error("all token weights are zero")]
    ZeroWeights,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("clustering token {token} failed: {source}")]
    TokenClustering {
        token: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("token {token} appears in the corpus but has no centroids in the codebook")]
    TokenMissingFromCodebook { token: u32 },

    #[error("dimension {dim} is not divisible by {subspaces} subspaces")]
    SubspaceMismatch { dim: usize, subspaces: usize },

    #[error("corrupted record for document {doc}: {reason}")]
    CorruptRecord { doc: usize, reason: String },

    #[error("integrity check failed for {component}: expected {expected}, found {actual}")]
    Integrity {
        component: String,
        expected: String,
        actual: String,
    },

    #[error("missing index component: {0}")]
    MissingComponent(PathBuf),

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("query id mismatch: {0}")]
    IdMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnknownMetric(_) | Error::Precondition(_) => 1,
            Error::Internal(_) => 3,
            Error::TokenClustering { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
