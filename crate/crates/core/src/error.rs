use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),

    #[error("backward called before forward")]
    BackwardBeforeForward,

    #[error("unknown architecture `{0}`")]
    UnknownArch(String),

    #[error("unknown augmentation `{0}`")]
    UnknownAugmentation(String),

    #[error("unknown output format `{0}`")]
    UnknownFormat(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{path}: {message}")]
    BadImage { path: PathBuf, message: String },

    #[error("model file does not match network: {0}")]
    ModelMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
