//! Reverse-mode automatic differentiation over dense `f32` tensors.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] walks the record in reverse once and returns the
//! [`Gradients`] of every tracked node; the tape is spent afterwards.

mod adam;
mod params;
mod rng;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use params::{Bound, ParamId, ParamSet};
pub use rng::{gaussian, seeded_rng, stream_rng, SeededRng};
pub use tape::{Binary, Gradients, Reduce, Tape, Unary, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid tensor shape {shape:?}")]
    InvalidShape { shape: Vec<usize> },
    #[error("shape {shape:?} does not hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: input outside the function domain")]
    DomainError { op: &'static str },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("expected a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("backward already ran on this tape")]
    StaleTape,
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("class index {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("parameter `{name}` has no gradient")]
    MissingGradient { name: String },
}
