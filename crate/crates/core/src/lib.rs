//! Lightweight per-beat ECG classification.
//!
//! The crate covers the full pipeline: parsing two-lead recordings,
//! QRS detection and beat segmentation, RR-interval and wavelet features,
//! two small recurrent classifiers whose outputs are blended by an MLP,
//! patient-specific training, and AAMI-style evaluation with a per-beat
//! latency benchmark. All numeric kernels are written in plain Rust.

pub mod evaluation;
pub mod mat;
pub mod models;
pub mod pca;
pub mod qrs;
pub mod record_io;
pub mod rnn;
pub mod synth;
pub mod training;
pub mod wavelet;

mod hbe1;

pub use hbe1::{read_tensors, write_tensors, Tensor};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("signal parse error at byte {offset}: {msg}")]
    SignalParse { offset: usize, msg: String },

    #[error("header parse error: {0}")]
    Header(String),

    #[error("annotation parse error: {0}")]
    Annotation(String),

    #[error("unknown beat symbol '{0}'")]
    UnknownSymbol(char),

    #[error("record {0} is excluded (paced beats)")]
    ExcludedRecord(u32),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("missing component: {0}")]
    MissingComponent(String),

    #[error("serialization error: {0}")]
    Serialize(String),

    #[error("missing bundles for records: {0:?}")]
    MissingBundles(Vec<u32>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}
