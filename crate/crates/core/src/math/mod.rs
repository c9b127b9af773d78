//! Tensor arithmetic, reverse-mode differentiation and seeded randomness.

mod gradcheck;
mod graph;
mod rng;
mod tensor;

pub use gradcheck::grad_check;
pub use graph::{ExpressionGraph, Gradients, NodeId, Primitive};
pub use rng::{derive_seed, RngStream};
pub use tensor::{sigmoid, Tensor, LOG_EPS};
