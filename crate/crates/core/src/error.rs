use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing observation for t={t}, series={series}")]
    MissingCell { t: usize, series: usize },

    #[error("lower bound {lower} exceeds upper bound {upper} at t={t}, series={series}")]
    IntervalOrderViolation {
        t: usize,
        series: usize,
        lower: f64,
        upper: f64,
    },

    #[error("window width {w} exceeds series length {len}")]
    WindowTooLarge { w: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("cluster {0} has no members")]
    EmptyCluster(usize),

    #[error("SCAD shape parameter must exceed 2, got {0}")]
    InvalidA(f64),

    #[error("window batch is empty")]
    EmptyBatch,

    #[error("cluster models disagree on dimension: {expected} vs {found}")]
    ModelDimensionMismatch { expected: usize, found: usize },

    #[error("brute-force enumeration of {paths} label paths exceeds the limit")]
    TooManyPaths { paths: f64 },

    #[error("working matrix became singular in column {column}")]
    SingularWorkingMatrix { column: usize },

    #[error("clustering degenerated: {0}")]
    DegenerateClustering(String),

    #[error("fold too small: {members} members for {folds} folds")]
    FoldTooSmall { members: usize, folds: usize },

    #[error("model file schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("corrupt model file: {0}")]
    CorruptFile(String),

    #[error("trajectory does not fit the window: side {side} < 2")]
    WindowTooShortForTrajectory { side: isize },

    #[error("recurrence plots have different sides: {expected} vs {found}")]
    SideMismatch { expected: usize, found: usize },

    #[error("kernel matrix is not symmetric positive definite")]
    KernelNotSpd,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("design matrix is rank deficient and ridge is zero")]
    SingularDesign,

    #[error("feature rows do not match windows: {0}")]
    RowMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
