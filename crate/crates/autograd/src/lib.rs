//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! Ops are recorded on a [`Graph`] as they execute. Each op stores a closure
//! computing its input gradients; [`Graph::backward`] replays them in reverse
//! order. [`Param`] handles are shared storage, so cloning one and using it
//! in two places of a model ties those weights together.

mod error;
mod float;
pub mod gemm;
mod graph;
mod lanes;
mod ops;
mod tensor;

pub use error::{Result, TensorError};
pub use float::Float;
pub use graph::{BackwardFn, Gradients, Graph, Param, Var};
pub use ops::{col2im, conv_out_size, im2col, permute_indices, ConvGeometry};
pub use tensor::{numel, Tensor};
