use std::path::{Path, PathBuf};

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data violates a value-level contract (nonfinite values, unmapped
    /// classes, missing months, ...).
    #[error("data quality: {0}")]
    DataQuality(String),

    /// A file did not parse as the expected on-disk format.
    #[error("format: {0}")]
    Format(String),

    /// Dimensions, grids or parameter shapes disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A caller supplied an argument outside the accepted domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Training produced a nonfinite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numeric,
    Io,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidArgument(_) => ErrorCategory::Usage,
            Error::DataQuality(_) | Error::Format(_) | Error::Shape(_) | Error::Json(_) => {
                ErrorCategory::Data
            }
            Error::Divergence { .. } => ErrorCategory::Numeric,
            Error::Io { .. } => ErrorCategory::Io,
        }
    }

    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
