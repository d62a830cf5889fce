//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records operations as they are evaluated. Calling
//! [`Graph::backward`] on a one-element node walks the tape once in reverse
//! and returns [`Gradients`] for every node that requires them. Graphs are
//! rebuilt for each training step.

mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod spectral;
mod tensor;

pub use gradcheck::{gradcheck, GradCheck};
pub use graph::{Gradients, Graph, Var};
pub use spectral::{dft2, idft2};
pub use tensor::Tensor;
