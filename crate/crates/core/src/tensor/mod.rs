//! Dense `f64` tensors and a tape-based reverse-mode differentiation engine.

mod gradcheck;
mod graph;
#[allow(clippy::module_inception)]
mod tensor;

pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use graph::{BinaryKind, Conv1dSpec, Gradients, Graph, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("invalid shape {0:?}: extents must be positive")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("non-finite input value at flat index {index}")]
    NonFiniteInput { index: usize },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    IncompatibleShapes {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("index {index:?} out of bounds for shape {shape:?}")]
    IndexOutOfBounds {
        index: Vec<usize>,
        shape: Vec<usize>,
    },
    #[error("slice [{start}, {start}+{len}) on axis {axis} out of bounds for shape {shape:?}")]
    SliceOutOfBounds {
        axis: usize,
        start: usize,
        len: usize,
        shape: Vec<usize>,
    },
    #[error(
        "receptive field of kernel {kernel} at dilation {dilation} exceeds input length {len} with padding {padding}"
    )]
    ReceptiveField {
        len: usize,
        kernel: usize,
        dilation: usize,
        padding: usize,
    },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("variable does not belong to this graph")]
    DetachedVar,
    #[error("{0}")]
    InvalidArgument(String),
}
