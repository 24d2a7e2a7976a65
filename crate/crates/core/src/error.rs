use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward: root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("backward: root is detached from the tape (no gradient path)")]
    DetachedRoot,

    #[error("grid: {dim} = {size} is not divisible by {patch}")]
    NotDivisible {
        dim: &'static str,
        size: usize,
        patch: usize,
    },

    #[error("malformed {format} data: {reason}")]
    Malformed { format: &'static str, reason: String },

    #[error("{format}: unexpected end of file")]
    UnexpectedEof { format: &'static str },

    #[error("{format}: unsupported version {found} (expected {expected})")]
    VersionMismatch {
        format: &'static str,
        found: u8,
        expected: u8,
    },

    #[error("{format}: checksum mismatch, file is corrupt")]
    Corrupt { format: &'static str },

    #[error("channel mismatch: expected {expected}, got {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("{}", config_location(*line, msg))]
    Config { line: usize, msg: String },

    #[error("config: missing required key `{0}`")]
    MissingKey(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn config_location(line: usize, msg: &str) -> String {
    if line == 0 {
        format!("command-line override: {msg}")
    } else {
        format!("config line {line}: {msg}")
    }
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input (config files, flags) rather than
    /// by the run itself.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::MissingKey(_))
    }
}
