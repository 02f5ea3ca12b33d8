use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("category {0} has no labeled pixels")]
    MissingEntity(usize),

    #[error("tree is empty after filtering")]
    EmptyTree,

    #[error("over-constrained image: quota {quota} x {classes} classes exceeds {pixels} pixels")]
    OverConstrained {
        quota: usize,
        classes: usize,
        pixels: usize,
    },

    #[error("relation id {relation} outside 1..={max}")]
    InvalidRelation { relation: usize, max: usize },

    #[error("non-finite loss at iteration {iter}: {detail}")]
    NonFiniteLoss { iter: usize, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by numerical breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient(_) | Error::NonFiniteLoss { .. }
        )
    }
}

/// Read and deserialize a JSON file, attaching the path to any failure.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Pretty-print `value` to `path` with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
