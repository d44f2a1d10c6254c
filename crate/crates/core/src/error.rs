use std::io;

use serde::Serialize;
use thiserror::Error;

use crate::model::container::ContainerError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single field-level validation failure, reported back to API clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Container(#[from] ContainerError),

    #[error("source `{0}` is already registered")]
    SourceExists(String),
    #[error("no connector registered for kind `{0}`")]
    UnknownConnector(String),
    #[error("unknown source `{0}`")]
    UnknownSource(String),
    #[error("source `{0}` is disabled")]
    SourceDisabled(String),
    #[error("recrawl of `{source_id}` failed: {message}")]
    RecrawlFailed { source_id: String, message: String },
    #[error("schedule for `{source_id}` is not due until {next_run}")]
    NotDue { source_id: String, next_run: String },

    #[error("motion needs at least two frames, got {0}")]
    MotionUndefined(usize),
    #[error("motion score {0} outside [0, 100]")]
    InvalidScore(f64),
    #[error("invalid OCR sample: {0}")]
    InvalidSample(String),
    #[error("container for clip {0} is missing from the store")]
    MissingPayload(String),

    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
    #[error("annotator `{0}` is already registered")]
    AnnotatorExists(String),
    #[error("invalid annotator descriptor: {0}")]
    InvalidAnnotator(String),
    #[error("annotator `{0}` timed out")]
    AnnotatorTimeout(String),
    #[error("annotator `{annotator_id}` unavailable: {message}")]
    AnnotatorUnavailable { annotator_id: String, message: String },
    #[error("annotator `{annotator_id}` protocol error: {message}")]
    AnnotatorProtocolError { annotator_id: String, message: String },
    #[error("no enabled annotator for kind `{0}`")]
    NoAnnotator(String),
    #[error("annotation records refer to different clips")]
    MergeMismatch,

    #[error("unknown clip {0}")]
    UnknownClip(String),

    #[error("query is empty after directive parsing")]
    EmptyQuery,
    #[error("shortfall: requested {requested} {channel} clips, only {available} available")]
    ShortfallUnmet { channel: &'static str, requested: usize, available: usize },
    #[error("invalid conditioning: {0}")]
    InvalidConditioning(String),
    #[error("invalid request")]
    InvalidRequest(Vec<FieldError>),
    #[error("manifest audit failed: {0}")]
    AuditFailed(String),

    #[error("empty data")]
    EmptyData,
    #[error("histogram edges must be strictly ascending with at least two entries")]
    InvalidEdges,

    #[error("corrupt store record in {file}: {message}")]
    CorruptStore { file: String, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Failures that may succeed if the same call is repeated later.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::AnnotatorTimeout(_) | Error::AnnotatorUnavailable { .. })
    }
}
