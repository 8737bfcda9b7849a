use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Locates a bad frame record: by its `frame_id` when it could be read,
/// otherwise by its line number in the sequence file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameRef {
    Id(u64),
    Line(usize),
    Unknown,
}

impl fmt::Display for FrameRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameRef::Id(id) => write!(f, "frame {id}"),
            FrameRef::Line(line) => write!(f, "line {line}"),
            FrameRef::Unknown => write!(f, "frame ?"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{frame}: {field}: {message}")]
    Frame {
        frame: FrameRef,
        field: String,
        message: String,
    },

    #[error("sequence header: {0}")]
    Header(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("undefined input: {0}")]
    UndefinedInput(&'static str),

    #[error("invalid state: {0}")]
    State(String),

    #[error("map has no instances")]
    NoInstances,

    #[error("instance rank {requested} out of range: only {available} instances")]
    RankOutOfRange { requested: usize, available: usize },

    #[error("node {0} not found")]
    NodeNotFound(u32),

    #[error("start position ({x:.3}, {y:.3}) {reason}")]
    InvalidStart { x: f64, y: f64, reason: &'static str },

    #[error("no reachable free cell in the occupancy grid")]
    Unreachable,

    #[error("scene packing failed: {0}")]
    Packing(String),

    #[error("map not found: {0}")]
    MapNotFound(PathBuf),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
