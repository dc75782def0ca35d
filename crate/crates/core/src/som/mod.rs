//! Kohonen self-organising map over latent error codes.
//!
//! Nodes sit on a `width × height` lattice, indexed row-major
//! (`id = y · width + x`). After training, every node keeps a histogram of
//! the labels of the training codes it wins, and a query code is attributed
//! to the majority label of the nearest populated node.

mod grid;
mod labels;
mod train;

pub use grid::{bmu, neighborhood, quantization_error, update, Neighborhood, SomGrid, UpdateRule};
pub use labels::{classify, LabelMap};
pub use train::{train_som, Schedule, SomTrainConfig, SomTraining};
