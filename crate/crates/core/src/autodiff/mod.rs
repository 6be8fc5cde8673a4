//! Dense tensors with tape-based reverse-mode differentiation.

mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod tensor;

pub use gradcheck::grad_check;
pub use graph::{Graph, Var};
pub use tensor::{numel, Scalar, Tensor};
