use alloc::vec::Vec;

use super::model::GeneratorModel;
use super::GeneratorConfig;
use crate::autodiff::{Graph, Tensor, Var};
use crate::{rng, Error, Matrix, Result};

/// Values of the individual loss terms, averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    /// Mean squared reconstruction error in standardised units.
    pub recon: f64,
    /// KL divergence to the prior, per datum.
    pub kl: f64,
    /// Mean squared error on the identical pair.
    pub identity: f64,
    pub total: f64,
}

/// Differentiable loss together with the tape that produced it.
pub struct LossGraph<'m> {
    pub graph: Graph<'m>,
    pub total: Var,
    pub terms: LossTerms,
}

/// Negative modified ELBO for one pair: reconstruction MSE plus `beta` times
/// the KL term, with one reparameterised sample drawn from `seed`.
pub fn elbo_loss<'m>(m: &'m GeneratorModel, h_i: &Matrix, h_f: &Matrix, beta: f64, seed: u64) -> Result<LossGraph<'m>> {
    let eps = rng::normal_vec(&mut rng::stream(seed, 0), m.latent_dim());
    batch_loss(m, &[(h_i, h_f)], &eps, beta, 0.0)
}

/// ELBO plus `lambda_reg` times the reconstruction error on `(h_i, h_i)`.
pub fn combined_loss<'m>(m: &'m GeneratorModel, h_i: &Matrix, h_f: &Matrix, cfg: &GeneratorConfig, seed: u64) -> Result<LossGraph<'m>> {
    let eps = rng::normal_vec(&mut rng::stream(seed, 0), m.latent_dim());
    batch_loss(m, &[(h_i, h_f)], &eps, cfg.beta, cfg.lambda_reg)
}

/// Batched loss; `eps` holds one standard-normal row per pair.
pub(crate) fn batch_loss<'m>(
    m: &'m GeneratorModel,
    pairs: &[(&Matrix, &Matrix)],
    eps: &[f64],
    beta: f64,
    lambda_reg: f64,
) -> Result<LossGraph<'m>> {
    if pairs.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    if !(beta >= 0.0 && lambda_reg >= 0.0) {
        return Err(Error::param("loss weights", "must be non-negative"));
    }
    let (b, p, l) = (pairs.len(), m.architecture().entries(), m.latent_dim());
    if eps.len() != b * l {
        return Err(Error::shape("noise", b * l, eps.len()));
    }
    let mut xi = Vec::with_capacity(b * p);
    let mut xf = Vec::with_capacity(b * p);
    for (hi, hf) in pairs {
        xi.extend(m.standardize(hi)?);
        xf.extend(m.standardize(hf)?);
    }
    let mut g = Graph::with_params(m.params());
    let vi = g.input(Tensor::matrix(b, p, xi)?);
    let vf = g.input(Tensor::matrix(b, p, xf)?);
    let ve = g.input(Tensor::matrix(b, l, eps.to_vec())?);

    let (mean, lv) = m.encoder_graph(&mut g, vi, vf)?;
    let half = g.scale(lv, 0.5);
    let std = g.exp(half);
    let noise = g.mul(std, ve)?;
    let z = g.add(mean, noise)?;
    let skips = m.condition_graph(&mut g, vi)?;
    let out = m.decoder_graph(&mut g, z, &skips, vi)?;
    let diff = g.sub(out, vf)?;
    let sq = g.square(diff);
    let recon = g.mean(sq);

    let var = g.exp(lv);
    let m2 = g.square(mean);
    let a = g.add(var, m2)?;
    let a = g.sub(a, lv)?;
    let a = g.sum(a);
    let a = g.shift(a, -((b * l) as f64));
    let kl = g.scale(a, 0.5 / b as f64);

    let weighted_kl = g.scale(kl, beta);
    let mut total = g.add(recon, weighted_kl)?;
    let mut identity_value = 0.0;
    if lambda_reg > 0.0 {
        let (mean_id, _) = m.encoder_graph(&mut g, vi, vi)?;
        let out_id = m.decoder_graph(&mut g, mean_id, &skips, vi)?;
        let d = g.sub(out_id, vi)?;
        let sq = g.square(d);
        let identity = g.mean(sq);
        identity_value = g.value(identity).data()[0];
        let w = g.scale(identity, lambda_reg);
        total = g.add(total, w)?;
    }
    let terms = LossTerms {
        recon: g.value(recon).data()[0],
        kl: g.value(kl).data()[0],
        identity: identity_value,
        total: g.value(total).data()[0],
    };
    Ok(LossGraph { graph: g, total, terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamId;
    use crate::generator::{Architecture, Normalization};
    use alloc::vec;

    fn tiny() -> (GeneratorModel, Matrix, Matrix) {
        let arch = Architecture {
            rows: 2,
            cols: 2,
            latent_dim: 2,
            hidden: vec![3],
        };
        let mut m = GeneratorModel::new(arch, Normalization::identity(4), 11).unwrap();
        // the near-zero output layer would hide decoder gradients
        let mut r = rng::stream(5, 5);
        for t in m.params_mut().tensors_mut() {
            for v in t.data_mut() {
                *v += 0.3 * rng::standard_normal(&mut r);
            }
        }
        let hi = Matrix::from_row_slice(2, 2, &[0.4, 0.6, 0.3, 0.7]);
        let hf = Matrix::from_row_slice(2, 2, &[0.5, 0.5, 0.2, 0.8]);
        (m, hi, hf)
    }

    /// Central-difference check of every parameter gradient.
    fn fd_error(beta: f64, lambda: f64) -> f64 {
        let (m, hi, hf) = tiny();
        let eps = [0.3, -1.1];
        let lg = batch_loss(&m, &[(&hi, &hf)], &eps, beta, lambda).unwrap();
        let analytic = lg.graph.backward(lg.total).unwrap().into_param_grads(m.params());
        let h = 1e-6;
        let mut probe = m.clone();
        let (mut diff, mut norm) = (0.0, 0.0);
        for p in 0..m.params().len() {
            for k in 0..m.params().get(ParamId(p)).len() {
                let orig = m.params().get(ParamId(p)).data()[k];
                let mut eval = |v: f64| {
                    probe.params_mut().get_mut(ParamId(p)).data_mut()[k] = v;
                    batch_loss(&probe, &[(&hi, &hf)], &eps, beta, lambda).unwrap().terms.total
                };
                let numeric = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
                probe.params_mut().get_mut(ParamId(p)).data_mut()[k] = orig;
                let a = analytic[p].data()[k];
                diff += (a - numeric) * (a - numeric);
                norm += numeric * numeric;
            }
        }
        libm::sqrt(diff) / libm::sqrt(norm).max(1e-8)
    }

    #[test]
    fn elbo_gradient_matches_finite_differences() {
        let e = fd_error(0.5, 0.0);
        assert!(e < 1e-4, "relative error {e}");
    }

    #[test]
    fn combined_gradient_matches_finite_differences() {
        let e = fd_error(0.001, 0.7);
        assert!(e < 1e-4, "relative error {e}");
    }

    #[test]
    fn perfect_decoder_without_kl_gives_zero_loss() {
        let arch = Architecture {
            rows: 2,
            cols: 2,
            latent_dim: 2,
            hidden: vec![3],
        };
        let m = GeneratorModel::zeros(arch, Normalization::identity(4)).unwrap();
        let h = Matrix::from_row_slice(2, 2, &[0.4, 0.6, 0.3, 0.7]);
        // zero residual reproduces h_i exactly, so h_f = h_i is a perfect fit
        let lg = elbo_loss(&m, &h, &h, 0.0, 3).unwrap();
        assert_eq!(lg.terms.total, 0.0);
        let lg = combined_loss(&m, &h, &h, &GeneratorConfig::default(), 3).unwrap();
        assert_eq!(lg.terms.identity, 0.0);
    }

    #[test]
    fn loss_bounds_and_lambda_zero_reduces_to_elbo() {
        let (m, hi, hf) = tiny();
        let cfg = GeneratorConfig {
            beta: 0.2,
            lambda_reg: 0.0,
            ..GeneratorConfig::default()
        };
        let elbo = elbo_loss(&m, &hi, &hf, cfg.beta, 4).unwrap().terms;
        let comb = combined_loss(&m, &hi, &hf, &cfg, 4).unwrap().terms;
        assert_eq!(elbo.total, comb.total);
        assert!(elbo.total >= cfg.beta * elbo.kl);
        let cfg = GeneratorConfig {
            lambda_reg: 0.5,
            ..cfg
        };
        let comb = combined_loss(&m, &hi, &hf, &cfg, 4).unwrap().terms;
        assert!(comb.identity >= 0.0 && comb.total >= elbo.total);
    }

    #[test]
    fn loss_rejects_shape_mismatch() {
        let (m, hi, _) = tiny();
        let bad = Matrix::zeros(3, 2);
        assert!(matches!(elbo_loss(&m, &hi, &bad, 0.1, 0), Err(Error::Shape { .. })));
    }
}
