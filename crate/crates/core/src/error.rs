use std::io;

use thiserror::Error;
use vser_dsp::DspError;
use vser_nn::NnError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("feature maps do not match: {0}")]
    Match(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("split ratio {0} leaves an empty split")]
    InvalidRatio(f64),
    #[error("cannot stratify: class {label} has {count} example(s), need at least 2")]
    Stratify { label: usize, count: usize },
    #[error("ingest failed: {0}")]
    Ingest(String),
    #[error("smoothing sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("missing prerequisite: {what} ({hint})")]
    Prerequisite { what: String, hint: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidRatio(_) | Error::InvalidSigma(_) => 2,
            Error::Prerequisite { .. } => 3,
            _ => 4,
        }
    }
}

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
