use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file or directory: {0}")]
    Missing(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("timestamp {t_us} us outside pose coverage [{lo_us}, {hi_us}]")]
    OutOfRange { t_us: i64, lo_us: i64, hi_us: i64 },

    #[error("no frame within {tol_s} s of t={t_us} us (nearest gap {gap_s:.3} s)")]
    FrameGap { t_us: i64, tol_s: f64, gap_s: f64 },

    #[error("could not fill batch after {attempts} anchor attempts")]
    BatchConstruction { attempts: usize },

    #[error("checkpoint integrity failure in {path}: {detail}")]
    CheckpointIntegrity { path: PathBuf, detail: String },

    #[error("checkpoint config mismatch:\n{diff}")]
    ConfigMismatch { diff: String },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
