use std::io;

use thiserror::Error;

use crate::io::npy::NpyError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A tensor shape did not line up with what an operation needs.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("{what}: expected {expected}, found {found}")]
    Mismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("data length {found} does not match shape {shape:?}")]
    DataLength { shape: [usize; 4], found: usize },
    #[error("{what}: output size would be empty (input {input}, kernel {kernel}, stride {stride}, padding {padding})")]
    EmptyOutput {
        what: &'static str,
        input: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Npy(#[from] NpyError),
    #[error("counts table: {0}")]
    Counts(String),
    #[error("label value {value} out of range 0..={max}")]
    LabelRange { value: i64, max: i64 },
    #[error("patch {index}: {reason}")]
    Patch { index: usize, reason: String },
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("undefined result: {0}")]
    Undefined(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
