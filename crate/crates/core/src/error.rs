use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: String, expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("invalid sparsity {sparsity} for signal length {len}")]
    InvalidSparsity { sparsity: usize, len: usize },

    #[error("measurement entry {index} is {value}, expected +1 or -1")]
    InvalidMeasurement { index: usize, value: f64 },

    #[error("layer cache does not match parameters: {0}")]
    StaleCache(String),

    #[error("NMSE reference signal is the zero vector")]
    ZeroTruth,

    #[error("training diverged at epoch {epoch}: {detail}")]
    DivergenceDetected { epoch: usize, detail: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().display().to_string(), source }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, detail: impl ToString) -> Self {
        Self::Format { path: path.as_ref().display().to_string(), detail: detail.to_string() }
    }
}
