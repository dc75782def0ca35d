use alloc::vec::Vec;

use rand::Rng as _;

use crate::{rng, Error, Result};

/// Neighbourhood kernel over lattice distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Neighborhood {
    #[default]
    Gaussian,
    Triangular,
}

/// Difference term used by [`update`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateRule {
    /// `w_v += γ N (z − w_v)`.
    #[default]
    Standard,
    /// `w_v += γ N (z − w_bmu)` for every node.
    BmuDifference,
}

/// Map weights on a rectangular lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SomGrid {
    width: usize,
    height: usize,
    dim: usize,
    weights: Vec<f64>,
}

impl SomGrid {
    pub fn new(width: usize, height: usize, dim: usize, weights: Vec<f64>) -> Result<Self> {
        if width * height < 4 {
            return Err(Error::BelowMinimum("map needs at least 4 nodes"));
        }
        if dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        if weights.len() != width * height * dim {
            return Err(Error::shape("map weights", width * height * dim, weights.len()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("map weights"));
        }
        Ok(SomGrid {
            width,
            height,
            dim,
            weights,
        })
    }

    /// Weights drawn uniformly inside the bounding box of `samples`.
    pub fn random_init(width: usize, height: usize, samples: &[&[f64]], seed: u64) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Empty("map initialisation samples"));
        };
        let dim = first.len();
        let mut lo = first.to_vec();
        let mut hi = first.to_vec();
        for s in samples {
            if s.len() != dim {
                return Err(Error::shape("latent", dim, s.len()));
            }
            for k in 0..dim {
                lo[k] = lo[k].min(s[k]);
                hi[k] = hi[k].max(s[k]);
            }
        }
        let mut r = rng::stream(seed, 0x736f6d);
        let weights = (0..width * height)
            .flat_map(|_| (0..dim).map(|k| lo[k] + (hi[k] - lo[k]) * r.random::<f64>()).collect::<Vec<_>>())
            .collect();
        Self::new(width, height, dim, weights)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, node: usize) -> &[f64] {
        &self.weights[node * self.dim..(node + 1) * self.dim]
    }

    pub fn weight_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.weights[node * self.dim..(node + 1) * self.dim]
    }

    /// Lattice coordinates `(x, y)`.
    pub fn position(&self, node: usize) -> (usize, usize) {
        (node % self.width, node / self.width)
    }

    pub(crate) fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::shape("latent", self.dim, z.len()));
        }
        Ok(())
    }

    pub(crate) fn distance_sq(&self, node: usize, z: &[f64]) -> f64 {
        self.weight(node).iter().zip(z).map(|(w, v)| (w - v) * (w - v)).sum()
    }
}

/// Best-matching node; ties go to the smallest id.
pub fn bmu(g: &SomGrid, z: &[f64]) -> Result<usize> {
    g.check_dim(z)?;
    let mut best = (0, f64::INFINITY);
    for v in 0..g.len() {
        let d = g.distance_sq(v, z);
        if d < best.1 {
            best = (v, d);
        }
    }
    Ok(best.0)
}

/// Kernel value for lattice points `a` and `b`.
pub fn neighborhood(kind: Neighborhood, a: (usize, usize), b: (usize, usize), radius: f64) -> f64 {
    let dx = a.0 as f64 - b.0 as f64;
    let dy = a.1 as f64 - b.1 as f64;
    let d2 = dx * dx + dy * dy;
    match kind {
        Neighborhood::Gaussian => libm::exp(-d2 / (2.0 * radius * radius)),
        Neighborhood::Triangular => (1.0 - libm::sqrt(d2) / radius).max(0.0),
    }
}

/// One update for sample `z`. Returns the BMU.
pub fn update(g: &mut SomGrid, z: &[f64], gamma: f64, radius: f64, kind: Neighborhood, rule: UpdateRule) -> Result<usize> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::param("gamma", "must lie in [0, 1]"));
    }
    if !(radius > 0.0) {
        return Err(Error::param("radius", "must be positive"));
    }
    let winner = bmu(g, z)?;
    let at = g.position(winner);
    let anchor = match rule {
        UpdateRule::Standard => None,
        UpdateRule::BmuDifference => Some(g.weight(winner).to_vec()),
    };
    for v in 0..g.len() {
        let step = gamma * neighborhood(kind, g.position(v), at, radius);
        if step == 0.0 {
            continue;
        }
        let w = g.weight_mut(v);
        match &anchor {
            None => w.iter_mut().zip(z).for_each(|(w, z)| *w += step * (z - *w)),
            Some(a) => w.iter_mut().zip(z).zip(a).for_each(|((w, z), a)| *w += step * (z - a)),
        }
    }
    Ok(winner)
}

/// Mean distance from each sample to its BMU weight.
pub fn quantization_error(g: &SomGrid, latents: &[&[f64]]) -> Result<f64> {
    if latents.is_empty() {
        return Err(Error::Empty("latents"));
    }
    let mut acc = 0.0;
    for z in latents {
        let v = bmu(g, z)?;
        acc += libm::sqrt(g.distance_sq(v, z));
    }
    Ok(acc / latents.len() as f64)
}
