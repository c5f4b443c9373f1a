use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("arena dimension {0} is outside 1..=63")]
    Dimension(u32),
    #[error("{name} = {value} is below the required floor of {floor}{hint}")]
    BelowFloor {
        name: &'static str,
        value: u64,
        floor: u64,
        hint: &'static str,
    },
    #[error("{name} = {value} exceeds the encodable maximum {max}")]
    TooLarge {
        name: &'static str,
        value: u64,
        max: u64,
    },
    #[error("a run with zero steps has nothing to challenge")]
    NoStepsToChallenge,
    #[error("storage fraction alpha = {0} must lie in [0, 1]")]
    Alpha(f64),
}

/// Malformed proof or path bytes.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("input truncated: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("bad magic bytes")]
    Magic,
    #[error("unsupported format version {0}")]
    Version(u8),
    #[error("invalid field {field}: {detail}")]
    Invalid { field: &'static str, detail: String },
    #[error("{0} trailing bytes after the last record")]
    Trailing(usize),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("run header {path}: {detail}")]
    Header { path: PathBuf, detail: String },
    #[error("run format version {found} is not supported (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
    #[error("run file {file} has {found} bytes, expected {expected}")]
    FileSize {
        file: &'static str,
        found: u64,
        expected: u64,
    },
    #[error("corrupt run log: replay diverges from the stored {what} at step {step}")]
    Diverged { what: &'static str, step: u64 },
    #[error("run log was recorded without {0}")]
    Missing(&'static str),
}

impl RunError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> RunError {
        RunError::Io {
            path: path.into(),
            source,
        }
    }
}
