//! Conditional generative model of forward-operator errors.

mod config;
mod loss;
mod model;
mod posterior;
mod train;

pub use config::GeneratorConfig;
pub use loss::{combined_loss, elbo_loss, LossGraph, LossTerms};
pub use model::{flatten, Architecture, Conditioned, GeneratorModel, Normalization};
pub use posterior::{kl_standard_normal, reparameterize, reparameterize_with, GaussianPosterior, LatentCode, LOG_VARIANCE_BOUND};
pub use train::{train, train_on_dataset, EpochLoss};
