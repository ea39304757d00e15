use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operation received tensors whose dimensions do not fit its contract.
    #[error("{op}: dimension error: {detail}")]
    Dim { op: &'static str, detail: String },

    /// An operation produced a NaN or infinite value.
    #[error("{op}: non-finite value in output")]
    NonFinite { op: &'static str },

    /// Input too short for the requested reduction.
    #[error("{op}: degenerate length {len}, need at least {min}")]
    DegenerateLength {
        op: &'static str,
        len: usize,
        min: usize,
    },

    /// A class label falls outside `0..num_classes`.
    #[error("label {label} out of range for {num_classes} classes")]
    LabelRange { label: usize, num_classes: usize },

    /// Backward was requested on a non-scalar node.
    #[error("backward: loss node must be scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    /// Invalid model, layer, or run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed dataset or results file.
    #[error("parse error in {path} line {line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    /// A model x dataset accuracy table has a hole.
    #[error("missing accuracy cell for model '{model}' on dataset '{dataset}'")]
    MissingCell { model: String, dataset: String },

    /// A p-value outside [0, 1] was supplied.
    #[error("p-value {value} outside [0, 1]")]
    PValueRange { value: f64 },

    /// Training aborted because the loss became non-finite.
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NanLoss { epoch: usize },

    /// Parameter snapshot file is corrupt or mismatched.
    #[error("snapshot error: {0}")]
    Snapshot(String),

    /// A run-time failure that is not a configuration problem.
    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dim {
            op,
            detail: detail.into(),
        }
    }
}
