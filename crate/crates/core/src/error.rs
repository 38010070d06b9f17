//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes incompatible for the attempted operation.
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A value (timestep, index) outside its permitted range.
    #[error("{what} out of range: got {got}, expected {expected}")]
    Range {
        what: &'static str,
        got: usize,
        expected: String,
    },

    /// Invalid configuration (bad hyperparameter, unknown key, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An operation produced or consumed a non-finite value.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A word is not present in the vocabulary.
    #[error("unknown vocabulary word: {0:?}")]
    Vocabulary(String),

    /// A tokenized prompt would exceed the conditioning sequence length.
    #[error("prompt of {got} tokens exceeds maximum length {max}")]
    PromptLength { got: usize, max: usize },

    /// Contract violation in the autodiff engine (e.g. backward on non-scalar).
    #[error("autodiff contract violation: {0}")]
    Contract(String),

    /// Malformed binary file (checkpoint, image).
    #[error("format error in {file}: {reason}")]
    Format { file: String, reason: String },

    /// Probe classifiers failed to reach the benchmark quality floor.
    #[error("benchmark quality: {0}")]
    BenchmarkQuality(String),

    /// Bad or inconsistent input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// A required artifact (probes, dataset) is missing.
    #[error("missing dependency: {0}")]
    Dependency(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(file: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
