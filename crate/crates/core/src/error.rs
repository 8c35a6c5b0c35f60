use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("masked softmax: row {row} has no unmasked entry")]
    AllMasked { row: usize },

    #[error("{op}: empty sequence")]
    EmptySequence { op: &'static str },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("malformed SQuAD document at {path}: {msg}")]
    MalformedSquad { path: String, msg: String },

    #[error("word vectors, line {line}: {msg}")]
    MalformedVectors { line: usize, msg: String },

    #[error("invalid encoder variant `{input}`: {msg}")]
    BadVariant { input: String, msg: String },

    #[error("infeasible synthetic corpus: {0}")]
    InfeasibleCorpus(String),

    #[error("missing predictions for {} example(s): {}", .0.len(), .0.join(", "))]
    MissingPredictions(Vec<String>),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("training diverged at step {step}: {diagnostic}")]
    Diverged { step: usize, diagnostic: String },

    #[error("metric log: {0}")]
    MetricLog(String),

    #[error("plot: {0}")]
    Plot(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
