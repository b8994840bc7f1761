use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the tensor, layer, architecture and training code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tensor shape must have at least one axis")]
    EmptyShape,
    #[error("axis {axis} of shape {shape:?} is zero")]
    ZeroDimension { axis: usize, shape: Vec<usize> },
    #[error("expected {expected} elements, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("index {index:?} out of bounds for shape {shape:?}")]
    IndexOutOfBounds { index: Vec<usize>, shape: Vec<usize> },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("backward called without a matching forward pass for layer {0}")]
    MissingContext(&'static str),
    #[error("unknown architecture id {0:?}")]
    UnknownArch(String),
    #[error("unknown head {0:?}")]
    UnknownHead(String),
    #[error("model already has the {0} head")]
    SameHead(&'static str),
    #[error("{0}")]
    Training(String),
}
