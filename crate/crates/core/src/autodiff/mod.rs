//! Minimal dense reverse-mode differentiation.
//!
//! A [`Graph`] records operations eagerly; [`Graph::backward`] sweeps the
//! tape in reverse and returns exact gradients for every node and every
//! stored parameter. Trainable tensors live in a [`ParamStore`] that graphs
//! borrow, so building a graph never copies weights.

mod adam;
mod graph;
mod params;
mod tensor;

pub use adam::Adam;
pub use graph::{Activation, Gradients, Graph, Var};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
