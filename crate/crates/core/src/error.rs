use std::collections::BTreeMap;
use std::io;

use thiserror::Error;

/// Errors produced by the solvers, the evaluation harness and file IO.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("eigensolver did not converge after {0} sweeps")]
    Convergence(usize),

    #[error("rank-deficient input: {0}")]
    RankDeficient(String),

    #[error("degenerate class {class}: {reason}")]
    DegenerateClass { class: u32, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unknown class {0}")]
    UnknownClass(u32),

    #[error("training diverged at epoch {epoch} (loss {loss}); lower the learning rate")]
    Divergence { epoch: usize, loss: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("unknown dtype byte {0}")]
    UnknownDtype(u8),

    #[error("model kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("every class failed: {}", describe_failures(.0))]
    AllClassesFailed(BTreeMap<u32, String>),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn describe_failures(f: &BTreeMap<u32, String>) -> String {
    f.iter()
        .map(|(c, e)| format!("class {c}: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
