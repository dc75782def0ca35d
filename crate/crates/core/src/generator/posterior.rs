use alloc::vec::Vec;

use crate::{rng, Error, Result};

/// Log-variances are clamped to `[-B, B]`.
pub const LOG_VARIANCE_BOUND: f64 = 20.0;

/// Latent error code `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode(Vec<f64>);

impl LatentCode {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::Empty("latent code"));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent code"));
        }
        Ok(LatentCode(z))
    }

    pub fn zeros(dim: usize) -> Self {
        LatentCode(alloc::vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|v| v * v).sum())
    }
}

/// Diagonal Gaussian `q(z | H_i, H_f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

impl GaussianPosterior {
    /// Validates dimensions and finiteness; log-variances are clamped.
    pub fn new(mean: Vec<f64>, mut log_variance: Vec<f64>) -> Result<Self> {
        if mean.len() != log_variance.len() {
            return Err(Error::shape("posterior", mean.len(), log_variance.len()));
        }
        if mean.is_empty() {
            return Err(Error::Empty("posterior"));
        }
        if mean.iter().any(|v| !v.is_finite()) || log_variance.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("posterior"));
        }
        for lv in &mut log_variance {
            *lv = lv.clamp(-LOG_VARIANCE_BOUND, LOG_VARIANCE_BOUND);
        }
        Ok(GaussianPosterior { mean, log_variance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean_code(&self) -> LatentCode {
        LatentCode(self.mean.clone())
    }

    pub fn std_dev(&self) -> Vec<f64> {
        self.log_variance.iter().map(|lv| libm::exp(0.5 * lv)).collect()
    }
}

/// `z = mean + exp(log_variance / 2) ⊙ ε` with `ε` from the seeded stream.
pub fn reparameterize(p: &GaussianPosterior, seed: u64) -> LatentCode {
    let mut r = rng::stream(seed, 0);
    let eps = rng::normal_vec(&mut r, p.dim());
    reparameterize_with(p, &eps)
}

pub fn reparameterize_with(p: &GaussianPosterior, eps: &[f64]) -> LatentCode {
    LatentCode(
        p.mean
            .iter()
            .zip(&p.log_variance)
            .zip(eps)
            .map(|((m, lv), e)| m + libm::exp(0.5 * lv) * e)
            .collect(),
    )
}

/// `KL(q || N(0, I)) = ½ Σ (exp(lv) + μ² − 1 − lv)`.
pub fn kl_standard_normal(p: &GaussianPosterior) -> f64 {
    0.5 * p
        .mean
        .iter()
        .zip(&p.log_variance)
        .map(|(m, lv)| libm::exp(*lv) + m * m - 1.0 - lv)
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn normal_log_pdf(x: f64, mean: f64, lv: f64) -> f64 {
        -0.5 * (libm::log(2.0 * core::f64::consts::PI) + lv + (x - mean) * (x - mean) / libm::exp(lv))
    }

    /// Monte-Carlo `E_q[log q(z) − log p(z)]`.
    fn kl_monte_carlo(p: &GaussianPosterior, samples: usize, seed: u64) -> f64 {
        let mut r = rng::stream(seed, 7);
        let mut acc = 0.0;
        for _ in 0..samples {
            let eps = rng::normal_vec(&mut r, p.dim());
            let z = reparameterize_with(p, &eps);
            for (k, zk) in z.as_slice().iter().enumerate() {
                acc += normal_log_pdf(*zk, p.mean[k], p.log_variance[k]) - normal_log_pdf(*zk, 0.0, 0.0);
            }
        }
        acc / samples as f64
    }

    #[test]
    fn kl_closed_form_values() {
        let prior = GaussianPosterior::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        assert_eq!(kl_standard_normal(&prior), 0.0);
        let shifted = GaussianPosterior::new(vec![1.0], vec![0.0]).unwrap();
        assert_eq!(kl_standard_normal(&shifted), 0.5);
    }

    #[test]
    fn kl_matches_monte_carlo_within_one_percent() {
        let mut r = rng::stream(2024, 1);
        use rand::Rng as _;
        for trial in 0..5 {
            let mean: Vec<f64> = (0..16).map(|_| r.random_range(-3.0..=3.0)).collect();
            let lv: Vec<f64> = (0..16).map(|_| r.random_range(-2.0..=2.0)).collect();
            let p = GaussianPosterior::new(mean, lv).unwrap();
            let exact = kl_standard_normal(&p);
            let mc = kl_monte_carlo(&p, 100_000, trial);
            assert!((mc - exact).abs() <= 0.01 * exact, "trial {trial}: exact {exact} mc {mc}");
        }
    }

    #[test]
    fn clamp_floor_collapses_to_mean() {
        let p = GaussianPosterior::new(vec![0.7, -1.3], vec![f64::NEG_INFINITY, -1e9]).unwrap();
        assert_eq!(p.log_variance, vec![-LOG_VARIANCE_BOUND; 2]);
        let z = reparameterize(&p, 5);
        for (zi, mi) in z.as_slice().iter().zip(&p.mean) {
            assert!((zi - mi).abs() < 1e-4);
        }
    }

    #[test]
    fn sample_mean_converges_to_posterior_mean() {
        let p = GaussianPosterior::new(vec![1.5, -0.5, 0.0], vec![0.4, -1.0, 1.2]).unwrap();
        let n = 100_000;
        let mut r = rng::stream(77, 3);
        let mut acc = [0.0; 3];
        for _ in 0..n {
            let eps = rng::normal_vec(&mut r, 3);
            for (a, z) in acc.iter_mut().zip(reparameterize_with(&p, &eps).as_slice()) {
                *a += z;
            }
        }
        for k in 0..3 {
            let sigma = libm::exp(0.5 * p.log_variance[k]);
            let tol = 3.0 * sigma / libm::sqrt(n as f64);
            assert!((acc[k] / n as f64 - p.mean[k]).abs() < tol);
        }
    }

    #[test]
    fn reparameterize_is_reproducible() {
        let p = GaussianPosterior::new(vec![0.1, 0.2], vec![0.0, 0.5]).unwrap();
        assert_eq!(reparameterize(&p, 9), reparameterize(&p, 9));
        assert_ne!(reparameterize(&p, 9), reparameterize(&p, 10));
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(
            mean in prop::collection::vec(-3.0f64..3.0, 1..8),
            lv_seed in prop::collection::vec(-2.0f64..2.0, 8),
        ) {
            let lv = lv_seed[..mean.len()].to_vec();
            let p = GaussianPosterior::new(mean, lv).unwrap();
            prop_assert!(kl_standard_normal(&p) >= 0.0);
        }
    }
}
