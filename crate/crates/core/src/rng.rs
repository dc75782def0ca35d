//! Seeded random streams.
//!
//! Every stochastic step derives its generator from a `(seed, stream)` pair,
//! so results do not depend on the order in which independent work runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

/// Generator for stream `stream` of master seed `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Fills a fresh vector with `n` standard normal draws.
pub fn normal_vec(rng: &mut Rng, n: usize) -> alloc::vec::Vec<f64> {
    (0..n).map(|_| standard_normal(rng)).collect()
}

/// Fisher–Yates shuffle driven by `rng`.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    use rand::seq::SliceRandom;
    items.shuffle(rng);
}
