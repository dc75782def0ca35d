//! Aliev–Panfilov excitation on a mesh graph.
//!
//! ```text
//! du/dt = D Δu + k u (1 − u)(u − a) − u v + I
//! dv/dt = ε(u, v) (−v − k u (u − a − 1)),   ε = eps0 + mu1 v / (u + mu2)
//! ```
//!
//! `Δ` is the unweighted graph Laplacian, integrated with explicit Euler.
//! The stimulus is the bounded current `I = A (1 − u)` at the pacing node.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::forge::SurfaceMesh;
use crate::{rng, Error, Matrix, Result};

/// Largest magnitude tolerated before a run is declared unstable.
const BLOW_UP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct APParams {
    pub k: f64,
    pub a: f64,
    pub eps0: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub diffusion: f64,
    pub dt: f64,
    pub steps: usize,
    /// Keep one frame every this many steps.
    pub record_every: usize,
    pub stimulus_amplitude: f64,
    pub stimulus_duration: f64,
}

impl Default for APParams {
    fn default() -> Self {
        APParams {
            k: 8.0,
            a: 0.15,
            eps0: 0.002,
            mu1: 0.2,
            mu2: 0.3,
            diffusion: 0.2,
            dt: 0.05,
            steps: 600,
            record_every: 5,
            stimulus_amplitude: 10.0,
            stimulus_duration: 1.0,
        }
    }
}

impl APParams {
    pub fn validate(&self, max_degree: usize) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(Error::param("a", "must lie in (0, 1)"));
        }
        if !(self.k > 0.0) {
            return Err(Error::param("k", "must be positive"));
        }
        if !(self.diffusion >= 0.0 && self.eps0 >= 0.0 && self.mu1 >= 0.0 && self.mu2 > 0.0) {
            return Err(Error::param("AP constants", "diffusion, eps0, mu1 must be non-negative and mu2 positive"));
        }
        if self.record_every == 0 || self.steps < self.record_every {
            return Err(Error::param("record_every", "need at least two frames"));
        }
        let courant = self.dt * self.diffusion * max_degree as f64;
        if courant >= 0.5 {
            return Err(Error::param(
                "dt",
                alloc::format!("dt·diffusion·max_degree = {courant} violates the bound 0.5"),
            ));
        }
        Ok(())
    }
}

/// Activation and recovery per node.
#[derive(Debug, Clone, PartialEq)]
pub struct APState {
    pub act: Vec<f64>,
    pub rec: Vec<f64>,
}

impl APState {
    pub fn rest(n: usize) -> Self {
        APState {
            act: vec![0.0; n],
            rec: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacingSite {
    pub node: usize,
    /// Stimulus onset in model time units.
    pub onset: f64,
}

/// Source potential, nodes × frames.
#[derive(Debug, Clone, PartialEq)]
pub struct HeartPotential {
    data: Matrix,
    dt: f64,
}

impl HeartPotential {
    pub fn new(data: Matrix, dt: f64) -> Result<Self> {
        if data.ncols() < 2 {
            return Err(Error::BelowMinimum("potential needs at least two frames"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("heart potential"));
        }
        if !(dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        Ok(HeartPotential { data, dt })
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn into_data(self) -> Matrix {
        self.data
    }

    /// Time between frames.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nodes(&self) -> usize {
        self.data.nrows()
    }

    pub fn frames(&self) -> usize {
        self.data.ncols()
    }
}

/// Integrates the model from rest and returns the activation variable at
/// every recorded frame (frame 0 is the initial state).
pub fn simulate_ap(mesh: &SurfaceMesh, pacing: PacingSite, p: &APParams) -> Result<HeartPotential> {
    p.validate(mesh.max_degree())?;
    let n = mesh.len();
    if pacing.node >= n {
        return Err(Error::param("pacing node", alloc::format!("{} is not below {n}", pacing.node)));
    }
    let mut s = APState::rest(n);
    let frames = p.steps / p.record_every + 1;
    let mut out = Matrix::zeros(n, frames);
    out.set_column(0, &nalgebra::DVector::from_column_slice(&s.act));
    let mut lap = vec![0.0; n];
    for step in 1..=p.steps {
        let t = (step - 1) as f64 * p.dt;
        for (i, l) in lap.iter_mut().enumerate() {
            let u = s.act[i];
            *l = mesh.neighbors(i).iter().map(|&j| s.act[j] - u).sum();
        }
        let stimulating = t >= pacing.onset && t < pacing.onset + p.stimulus_duration;
        for i in 0..n {
            let (u, v) = (s.act[i], s.rec[i]);
            let mut du = p.diffusion * lap[i] + p.k * u * (1.0 - u) * (u - p.a) - u * v;
            if stimulating && i == pacing.node {
                du += p.stimulus_amplitude * (1.0 - u);
            }
            let eps = p.eps0 + p.mu1 * v / (u + p.mu2);
            let dv = eps * (-v - p.k * u * (u - p.a - 1.0));
            s.act[i] = u + p.dt * du;
            s.rec[i] = v + p.dt * dv;
        }
        if let Some(bad) = s.act.iter().chain(&s.rec).find(|v| !(v.abs() <= BLOW_UP)) {
            return Err(Error::Unstable { step, value: *bad });
        }
        if step % p.record_every == 0 {
            out.set_column(step / p.record_every, &nalgebra::DVector::from_column_slice(&s.act));
        }
    }
    HeartPotential::new(out, p.dt * p.record_every as f64)
}

/// `count` pacing nodes: a seeded first pick, then repeatedly the node
/// farthest in hops from those already chosen (ties to the smallest index).
pub fn select_pacing_sites(mesh: &SurfaceMesh, count: usize, seed: u64) -> Result<Vec<usize>> {
    if count == 0 || count > mesh.len() {
        return Err(Error::param("pacing count", "must lie in 1..=nodes"));
    }
    let mut r = rng::stream(seed, 0x7061);
    let mut sites = vec![r.random_range(0..mesh.len())];
    let mut nearest: Vec<usize> = hops(mesh, sites[0]);
    while sites.len() < count {
        let next = (0..mesh.len())
            .max_by(|&a, &b| nearest[a].cmp(&nearest[b]).then(b.cmp(&a)))
            .expect("non-empty mesh");
        sites.push(next);
        for (d, e) in nearest.iter_mut().zip(hops(mesh, next)) {
            *d = (*d).min(e);
        }
    }
    Ok(sites)
}

fn hops(mesh: &SurfaceMesh, start: usize) -> Vec<usize> {
    mesh.bfs_distances(start).into_iter().map(|d| d.unwrap_or(usize::MAX)).collect()
}
