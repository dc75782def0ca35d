use crate::forge::ForwardOperator;
use crate::{rng, Error, Matrix, Result};

use super::ap::HeartPotential;

/// Sensor signals, leads × frames.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyRecording {
    data: Matrix,
    dt: f64,
    snr_db: Option<f64>,
}

impl BodyRecording {
    pub fn new(data: Matrix, dt: f64, snr_db: Option<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("body recording"));
        }
        if data.is_empty() {
            return Err(Error::Empty("body recording"));
        }
        Ok(BodyRecording { data, dt, snr_db })
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn into_data(self) -> Matrix {
        self.data
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// SNR of the injected noise, `None` for a clean projection.
    pub fn snr_db(&self) -> Option<f64> {
        self.snr_db
    }
}

/// `y = H u`, frame by frame.
pub fn forward_project(h: &ForwardOperator, u: &HeartPotential) -> Result<BodyRecording> {
    if h.matrix().ncols() != u.nodes() {
        return Err(Error::shape("operator columns", u.nodes(), h.matrix().ncols()));
    }
    BodyRecording::new(h.matrix() * u.data(), u.dt(), None)
}

/// Adds white Gaussian noise at `snr_db` relative to the mean signal power.
/// An infinite SNR returns the recording unchanged.
pub fn add_noise(y: &BodyRecording, snr_db: f64, seed: u64) -> Result<BodyRecording> {
    if snr_db == f64::INFINITY {
        return Ok(y.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::param("snr_db", "must be finite or +inf"));
    }
    let power = y.data.norm_squared() / y.data.len() as f64;
    if power == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let sigma = libm::sqrt(power / libm::pow(10.0, snr_db / 10.0));
    let mut r = rng::stream(seed, 0x6e6f);
    let mut noisy = y.data.clone();
    // column-major walk; fixed order keeps the draw reproducible
    noisy.iter_mut().for_each(|v| *v += sigma * rng::standard_normal(&mut r));
    BodyRecording::new(noisy, y.dt, Some(snr_db))
}

/// `10 log10(‖clean‖² / ‖noisy − clean‖²)`.
pub fn measured_snr_db(clean: &Matrix, noisy: &Matrix) -> Result<f64> {
    if clean.shape() != noisy.shape() {
        return Err(Error::shape("recording", clean.shape(), noisy.shape()));
    }
    let noise = (noisy - clean).norm_squared();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(clean.norm_squared() / noise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut r = rng::stream(seed, 0);
        Matrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
    }

    fn potential(m: Matrix) -> HeartPotential {
        HeartPotential::new(m, 0.2).unwrap()
    }

    #[test]
    fn projection_matches_triple_loop() {
        let h = ForwardOperator::new(random(7, 5, 1), 0, None).unwrap();
        let u = random(5, 9, 2);
        let y = forward_project(&h, &potential(u.clone())).unwrap();
        for i in 0..7 {
            for t in 0..9 {
                let mut acc = 0.0;
                for j in 0..5 {
                    acc += h.matrix()[(i, j)] * u[(j, t)];
                }
                assert!((y.data()[(i, t)] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_special_cases() {
        let mut sel = Matrix::zeros(1, 4);
        sel[(0, 2)] = 1.0;
        let h = ForwardOperator::new(sel, 0, None).unwrap();
        let u = random(4, 6, 3);
        let y = forward_project(&h, &potential(u.clone())).unwrap();
        assert_eq!(y.data().row(0), u.row(2));
        let y = forward_project(&h, &potential(Matrix::zeros(4, 6))).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert!(forward_project(&h, &potential(Matrix::zeros(3, 6))).is_err());
    }

    #[test]
    fn projection_is_linear() {
        let h = ForwardOperator::new(random(6, 5, 4), 0, None).unwrap();
        let (u1, u2) = (random(5, 8, 5), random(5, 8, 6));
        let alpha = -1.7;
        let lhs = forward_project(&h, &potential(&u1 * alpha + &u2)).unwrap();
        let rhs = forward_project(&h, &potential(u1)).unwrap().into_data() * alpha
            + forward_project(&h, &potential(u2)).unwrap().into_data();
        assert!((lhs.data() - rhs).abs().max() < 1e-12);
    }

    #[test]
    fn noise_hits_requested_snr() {
        let y = BodyRecording::new(random(96, 121, 7), 0.2, None).unwrap();
        for seed in 0..5 {
            let noisy = add_noise(&y, 35.0, seed).unwrap();
            let snr = measured_snr_db(y.data(), noisy.data()).unwrap();
            assert!((snr - 35.0).abs() <= 0.3, "measured {snr}");
        }
    }

    #[test]
    fn noise_sentinels_and_reproducibility() {
        let y = BodyRecording::new(random(4, 4, 8), 0.2, None).unwrap();
        assert_eq!(add_noise(&y, f64::INFINITY, 1).unwrap(), y);
        assert_eq!(add_noise(&y, 35.0, 1).unwrap(), add_noise(&y, 35.0, 1).unwrap());
        assert_ne!(add_noise(&y, 35.0, 1).unwrap(), add_noise(&y, 35.0, 2).unwrap());
        let zero = BodyRecording::new(Matrix::zeros(3, 3), 0.2, None).unwrap();
        assert!(matches!(add_noise(&zero, 35.0, 1), Err(Error::ZeroSignal)));
    }
}
