//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! Operations record themselves on a [`Tape`]; [`Tape::backward`] sweeps
//! the record in reverse and returns [`Gradients`]. Gradients accumulate
//! additively, both inside a sweep and into caller-owned buffers.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, GradCheckReport, ParamCheck};
pub use tape::{sigmoid_scalar, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("{op} expects rank {expected}, got shape {shape:?}")]
    Rank { op: &'static str, expected: usize, shape: Vec<usize> },
    #[error("segment id {id} out of range for {num_segments} segments")]
    SegmentOutOfRange { id: usize, num_segments: usize },
    #[error("row index {index} out of range for {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("{op} on empty input")]
    Empty { op: &'static str },
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
}

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { name: name.into(), value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}
