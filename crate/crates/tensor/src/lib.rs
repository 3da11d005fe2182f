//! Dense row-major `f64` tensors with tape-free reverse-mode differentiation.
//!
//! Every op records its parents and a backward closure when gradient
//! recording is enabled and at least one input requires a gradient. Calling
//! [`Tensor::backward`] walks the recorded graph in reverse topological order.
//!
//! Shape mismatches inside the ops are programming errors and panic, the
//! same way `ndarray` does. Callers that accept external data validate shapes
//! before reaching this layer.

mod conv;
mod elementwise;
mod gemm;
mod graph;
mod linear;
mod norm;
pub mod optim;
pub mod params;
mod pool;
mod reduce;
mod shape_ops;

pub use graph::{no_grad, Gradients, NoGradGuard, Tensor};
pub use norm::StatsPool;
pub use params::{ParamEntry, ParamId, ParamStore};

/// Number of elements for a shape. The empty shape is a scalar.
pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}
