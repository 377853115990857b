use std::path::PathBuf;

/// Errors produced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite coordinate at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("negative distance {0}")]
    NegativeDistance(f64),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("isolated node {0}: non-positive degree")]
    IsolatedNode(usize),

    #[error("singular system")]
    SingularSystem,

    #[error("duplicate nodes {0} and {1}")]
    DuplicateNodes(usize, usize),

    #[error("nodes are not 1-unisolvent: polynomial matrix has rank {rank}, need {required}")]
    NotUnisolvent { rank: usize, required: usize },

    #[error("eigensolver did not converge")]
    EigenNonConvergence,

    #[error("zero eigenvalue for eigenvector {0}")]
    ZeroEigenvalue(usize),

    #[error("zero degree at query point")]
    ZeroQueryDegree,

    #[error("scale too large for spacing: all Shepard weights underflow")]
    ScaleTooLarge,

    #[error("empty neighbourhood")]
    EmptyNeighborhood,

    #[error("no points")]
    NoPoints,

    #[error("ragged table: line {line} has {found} fields, expected {expected}")]
    RaggedTable { line: usize, found: usize, expected: usize },

    #[error("malformed input at line {line}: {msg}")]
    Malformed { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
