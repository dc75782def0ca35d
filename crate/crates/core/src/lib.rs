//! Core numerics for modelling and reducing unknown errors in mechanistic
//! forward operators.
//!
//! The crate is `no_std` (with `alloc`) and contains no IO. It covers:
//!
//! * [`forge`]: synthetic heart/torso geometry, the surrogate transfer
//!   operator, labelled geometric error transforms and paired datasets.
//! * [`autodiff`]: a small dense reverse-mode tape with an Adam optimizer.
//! * [`generator`]: the conditional generative error model `G(H_i, z)` with
//!   its variational encoder and identity-regularised ELBO.
//! * [`som`]: a Kohonen map over latent error codes used to attribute an
//!   error to its source class.
//! * [`cardiac`]: Aliev–Panfilov source simulation and noisy projection.
//! * [`inverse`]: Laplacian Tikhonov solves, bounded derivative-free
//!   trust-region minimisation and the alternating inverse loop.
//! * [`metrics`]: reconstruction metrics (RMSE, correlations, activation
//!   times, pacing localisation).
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod cardiac;
pub mod error;
pub mod forge;
pub mod generator;
pub mod inverse;
pub mod metrics;
pub mod rng;
pub mod som;

pub use error::{Error, Result};

/// Dense real matrix used for operators, potentials and recordings.
pub type Matrix = nalgebra::DMatrix<f64>;
