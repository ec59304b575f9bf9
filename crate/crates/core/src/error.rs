use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::kuramoto::Trace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("bad idx magic 0x{found:08x} (expected 0x{expected:08x})")]
    Magic { expected: u32, found: u32 },

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Length { expected: usize, actual: usize },

    #[error("label {label} at index {index} is out of range for {n_classes} classes")]
    LabelRange {
        index: usize,
        label: usize,
        n_classes: usize,
    },

    #[error("image {index} has no label")]
    Unlabeled { index: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("model file: {0}")]
    Model(String),

    #[error("non-finite phase at oscillator {index}")]
    NonFinite { index: usize },

    #[error("integration diverged at step {step}")]
    Diverged { step: usize, trace: Box<Trace> },

    #[error("class {class}: {source}")]
    InClass {
        class: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("oracle refuses P = {0} (limit 16)")]
    OracleSize(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
