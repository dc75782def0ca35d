use alloc::vec::Vec;

use super::loss::batch_loss;
use super::model::{Architecture, GeneratorModel, Normalization};
use super::GeneratorConfig;
use crate::autodiff::Adam;
use crate::forge::{Dataset, Split};
use crate::{rng, Error, Matrix, Result};

/// Per-epoch means of the loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Reconstruction plus weighted KL.
    pub elbo: f64,
    pub kl: f64,
    pub identity: f64,
    pub total: f64,
}

/// Trains all three networks jointly with Adam on shuffled minibatches.
/// Returns one entry per epoch.
pub fn train(model: &mut GeneratorModel, pairs: &[(&Matrix, &Matrix)], cfg: &GeneratorConfig) -> Result<Vec<EpochLoss>> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if cfg.latent_dim != model.latent_dim() {
        return Err(Error::shape("latent dimension", model.latent_dim(), cfg.latent_dim));
    }
    for (hi, hf) in pairs {
        model.check_operator(hi)?;
        model.check_operator(hf)?;
    }
    let mut adam = Adam::new(model.params(), cfg.learning_rate);
    let mut order_rng = rng::stream(cfg.seed, 1);
    let mut noise_rng = rng::stream(cfg.seed, 2);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        rng::shuffle(&mut order_rng, &mut order);
        let mut acc = EpochLoss {
            epoch,
            elbo: 0.0,
            kl: 0.0,
            identity: 0.0,
            total: 0.0,
        };
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Matrix, &Matrix)> = chunk.iter().map(|&i| pairs[i]).collect();
            let eps = rng::normal_vec(&mut noise_rng, batch.len() * cfg.latent_dim);
            let (terms, grads) = {
                let lg = batch_loss(model, &batch, &eps, cfg.beta, cfg.lambda_reg)?;
                let grads = lg.graph.backward(lg.total)?.into_param_grads(model.params());
                (lg.terms, grads)
            };
            if !terms.total.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            adam.step(model.params_mut(), &grads)?;
            let w = batch.len() as f64 / pairs.len() as f64;
            acc.elbo += w * (terms.recon + cfg.beta * terms.kl);
            acc.kl += w * terms.kl;
            acc.identity += w * terms.identity;
            acc.total += w * terms.total;
        }
        curve.push(acc);
    }
    Ok(curve)
}

/// Fits the normalisation on the training split, initialises a model from
/// `cfg.seed` and trains it.
pub fn train_on_dataset(dataset: &Dataset, cfg: &GeneratorConfig) -> Result<(GeneratorModel, Vec<EpochLoss>)> {
    cfg.validate()?;
    let pairs: Vec<(&Matrix, &Matrix)> = dataset
        .pairs(Split::Train)
        .into_iter()
        .map(|(hi, hf, _)| (hi.matrix(), hf.matrix()))
        .collect();
    let Some((first, _)) = pairs.first() else {
        return Err(Error::Empty("training split"));
    };
    let arch = Architecture {
        rows: first.nrows(),
        cols: first.ncols(),
        latent_dim: cfg.latent_dim,
        hidden: cfg.hidden.clone(),
    };
    let norm = Normalization::fit(&pairs)?;
    let mut model = GeneratorModel::new(arch, norm, cfg.seed)?;
    let curve = train(&mut model, &pairs, cfg)?;
    Ok((model, curve))
}
