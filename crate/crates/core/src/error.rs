use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid length: expected {expected} bits, got {actual}")]
    InvalidLength { expected: usize, actual: usize },

    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("stuffing violation: run of six identical bits ending at offset {offset}")]
    StuffingViolation { offset: usize },

    #[error("arbitration with no contenders")]
    EmptyContention,

    #[error("duplicate contender {0:#010x} in arbitration")]
    DuplicateContender(u32),

    #[error("malformed frame: {0}")]
    MalformedFrame(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("undersampled: {ratio:.2} samples per bit, at least {min} required")]
    Undersampled { ratio: f64, min: f64 },

    #[error("window {start}..{end} outside {len} samples")]
    OutOfRange { start: usize, end: usize, len: usize },

    #[error("insufficient samples: need at least {min}, got {actual}")]
    InsufficientSamples { min: usize, actual: usize },

    #[error("degenerate spectrum: total magnitude is zero")]
    DegenerateSpectrum,

    #[error("degenerate task: {0}")]
    DegenerateTask(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: class {class} has {count} observations, {needed} needed")]
    InsufficientData {
        class: String,
        count: usize,
        needed: usize,
    },

    #[error("identifier {0:#010x} is not registered in the pairing table")]
    UnknownIdentifier(u32),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("ingestion failed for {}: {message}", path.display())]
    Ingestion { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }
}
