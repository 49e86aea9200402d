use std::path::PathBuf;

/// Errors produced by loading, training and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("no interactions found in {path}")]
    NoInteractions { path: PathBuf },

    #[error(
        "similarity file {path} has no entries overlapping the entity index \
         ({skipped} entries skipped)"
    )]
    NoOverlap { path: PathBuf, skipped: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("fold leakage: test positive ({i}, {j}) is present in training positives")]
    Leakage { i: u32, j: u32 },

    #[error("model file {path}: {msg}")]
    ModelFormat { path: PathBuf, msg: String },

    #[error("model/index mismatch: {0}")]
    ModelMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
