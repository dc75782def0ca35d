use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::Adam;
use crate::{Error, Result};

/// Training and architecture settings for the generative error model.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    /// KL weight of the modified ELBO.
    pub beta: f64,
    /// Weight of the identity-reconstruction term.
    pub lambda_reg: f64,
    /// Widths of the encoder layers, outermost first. The decoder mirrors
    /// them.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            epochs: 100,
            batch_size: 64,
            latent_dim: 16,
            beta: 0.001,
            lambda_reg: 0.02,
            hidden: vec![64, 32],
            learning_rate: Adam::DEFAULT_LR,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", "must be positive"));
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return Err(Error::param("lambda_reg", "must be non-negative"));
        }
        if self.latent_dim == 0 {
            return Err(Error::param("latent_dim", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::param("hidden", "need at least one non-empty layer"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        Ok(())
    }
}
