use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {dim} expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{op}: {reason}")]
    InvalidInput { op: &'static str, reason: String },

    #[error("{op}: saved forward input is missing")]
    MissingCache { op: &'static str },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid channel plan: {0}")]
    ChannelPlan(String),

    #[error("model file: bad magic bytes {found:?}")]
    BadMagic { found: Vec<u8> },

    #[error("model file: unsupported version {found} (expected {expected})")]
    BadVersion { found: u8, expected: u8 },

    #[error("model file: spec hash mismatch (header {recorded}, computed {computed})")]
    SpecHashMismatch { recorded: String, computed: String },

    #[error("{what}: truncated at byte offset {offset} (needed {needed} more bytes)")]
    Truncated {
        what: &'static str,
        offset: usize,
        needed: usize,
    },

    #[error("header line {line}: {reason}")]
    HeaderParse { line: usize, reason: String },

    #[error("unsupported signal format {0} (only format 212 is supported)")]
    UnsupportedFormat(u32),

    #[error("annotation file at byte offset {offset}: {reason}")]
    AnnotationParse { offset: usize, reason: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(op: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            op,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
