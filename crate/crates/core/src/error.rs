use std::path::PathBuf;

use thiserror::Error;

use crate::autodiff::AutodiffError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("label {label} is outside the vocabulary of {classes} classes")]
    UnknownLabel { label: usize, classes: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dataset `{0}` is empty")]
    EmptyDataset(String),
    #[error("class {0} was already learned by an earlier task")]
    LabelOverlap(usize),
    #[error("knowledge reconstruction needs a decoder snapshot (task 1 has none)")]
    NoSnapshot,
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{0}: file is truncated")]
    TruncatedFile(PathBuf),
    #[error("class {0} has no samples")]
    MissingClass(usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("feature dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("class {0} is missing from the training set")]
    ClassMissing(usize),
    #[error("grid needs {needed} images, got {got}")]
    TooFewImages { needed: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("no data root: pass --data-root or set LIFEGEN_DATA")]
    MissingDataRoot,
    #[error("output directory {0} is not empty (use --force to reuse it)")]
    OutputExists(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
