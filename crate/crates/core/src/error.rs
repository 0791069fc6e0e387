use std::path::PathBuf;

use thiserror::Error;

use crate::eval::EvalError;
use crate::features::FeatureError;
use crate::ingest::IngestError;
use crate::model::ModelError;
use crate::report::ReportError;
use crate::synth::SynthError;

/// Any pipeline failure caused by input data or the file system.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {message}")]
    Json { path: PathBuf, message: String },
}

impl Error {
    /// Stable identifier printed after `ERROR`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Ingest(e) => e.code(),
            Error::Features(e) => e.code(),
            Error::Model(e) => e.code(),
            Error::Eval(e) => e.code(),
            Error::Synth(e) => e.code(),
            Error::Report(e) => e.code(),
            Error::Io { .. } => "Io",
            Error::Json { .. } => "InvalidJson",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
