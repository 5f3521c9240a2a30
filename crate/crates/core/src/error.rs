use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument to an operation (bad order, empty input, out-of-range index).
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    Dimension {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("missing dataset file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}:{line}: {msg}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}:{line}: index {index} out of range (limit {limit})", file.display())]
    IndexOutOfRange {
        file: PathBuf,
        line: usize,
        index: usize,
        limit: usize,
    },

    #[error("node {node} appears in both the {first} and {second} masks")]
    MaskOverlap {
        node: usize,
        first: &'static str,
        second: &'static str,
    },

    #[error("node {node} has label {label} but the dataset declares {classes} classes")]
    LabelOutOfRange {
        node: usize,
        label: usize,
        classes: usize,
    },

    #[error("node {node} is in the {mask} mask but has no label")]
    UnlabeledMaskedNode { node: usize, mask: &'static str },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by dataset contents or files on disk.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MissingFile(_)
                | Error::Parse { .. }
                | Error::IndexOutOfRange { .. }
                | Error::MaskOverlap { .. }
                | Error::LabelOutOfRange { .. }
                | Error::UnlabeledMaskedNode { .. }
                | Error::Dataset(_)
                | Error::Io { .. }
        )
    }
}
