use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm below 1e-12: no projective class")]
    ZeroVector,
    #[error("non-finite coordinate in vector")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("scale must be positive and finite, got {0}")]
    NonPositiveScale(f64),
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("invalid radius grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("volume {volume} below the minimum of {required} neighbors")]
    InsufficientNeighbors { volume: usize, required: usize },
    #[error("no defined dimension sample at radius {0}")]
    UndefinedAtRadius(f64),
    #[error("fewer than two defined dimension samples")]
    NoDefinedSamples,
    #[error("no cloud points within the locality radius")]
    EmptyNeighborhood,
    #[error("every cloud point coincides with the center")]
    DegenerateCenter,
    #[error("context window is empty")]
    EmptyContext,
    #[error("aggregated context vector is numerically zero")]
    ZeroAggregate,
    #[error("token {0} is singular but has no context")]
    MissingContext(usize),
    #[error("token id {id} out of range for table of {len} rows")]
    TokenOutOfRange { id: usize, len: usize },
    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),
    #[error("point lies on no ground-truth component")]
    OffManifold,
    #[error("point is not a recorded singular point")]
    UnknownSingularPoint,
    #[error("malformed input: {0}")]
    MalformedHeader(String),
    #[error("row {row}: expected {expected} coordinates, found {found}")]
    RowDimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {col}: non-finite value")]
    NonFiniteValue { row: usize, col: usize },
    #[error("row {row}, column {col}: cannot parse {text:?} as a number")]
    Parse { row: usize, col: usize, text: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
