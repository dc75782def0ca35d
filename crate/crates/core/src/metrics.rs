//! Reconstruction metrics.

use alloc::vec::Vec;

use crate::cardiac::{HeartPotential, PacingSite};
use crate::forge::{distance, SurfaceMesh};
use crate::{Error, Matrix, Result};

/// Summary of one reconstruction against ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    /// Mean spatial correlation.
    pub scc: f64,
    /// Mean temporal correlation.
    pub tcc: f64,
    pub loc_dist_mm: f64,
}

impl Metrics {
    pub fn evaluate(est: &HeartPotential, truth: &HeartPotential, mesh: &SurfaceMesh, site: PacingSite) -> Result<Self> {
        Ok(Metrics {
            rmse: rmse(est.data(), truth.data())?,
            scc: spatial_cc(est.data(), truth.data())?,
            tcc: temporal_cc(est.data(), truth.data())?,
            loc_dist_mm: localization_distance(est, mesh, site)?,
        })
    }
}

fn same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape("matrix", a.shape(), b.shape()));
    }
    if a.is_empty() {
        return Err(Error::Empty("matrix"));
    }
    Ok(())
}

/// Root mean squared entrywise difference.
pub fn rmse(a: &Matrix, b: &Matrix) -> Result<f64> {
    same_shape(a, b)?;
    Ok(libm::sqrt((a - b).norm_squared() / a.len() as f64))
}

/// Pearson correlation, `None` when either side has zero variance.
pub fn pearson(x: impl Iterator<Item = f64> + Clone, y: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let n = x.clone().count() as f64;
    let mx = x.clone().sum::<f64>() / n;
    let my = y.clone().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

fn mean_of(values: impl Iterator<Item = Option<f64>>, what: &'static str) -> Result<f64> {
    let kept: Vec<f64> = values.flatten().collect();
    if kept.is_empty() {
        return Err(Error::Degenerate(what));
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Correlation across nodes per frame, averaged over frames with non-zero
/// variance.
pub fn spatial_cc(est: &Matrix, truth: &Matrix) -> Result<f64> {
    same_shape(est, truth)?;
    mean_of(
        (0..est.ncols()).map(|t| pearson(est.column(t).iter().copied(), truth.column(t).iter().copied())),
        "every frame has zero variance",
    )
}

/// Correlation across time per node, averaged over nodes with non-zero
/// variance.
pub fn temporal_cc(est: &Matrix, truth: &Matrix) -> Result<f64> {
    same_shape(est, truth)?;
    mean_of(
        (0..est.nrows()).map(|i| pearson(est.row(i).iter().copied(), truth.row(i).iter().copied())),
        "every node trace is flat",
    )
}

/// Per-node activation times.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    pub times: Vec<f64>,
    /// Flat traces; their time is reported as 0.
    pub degenerate: Vec<bool>,
}

impl ActivationMap {
    /// Node with the earliest activation among non-degenerate nodes (ties
    /// to the smallest index).
    pub fn earliest(&self) -> Option<usize> {
        (0..self.times.len())
            .filter(|&i| !self.degenerate[i])
            .min_by(|&a, &b| self.times[a].total_cmp(&self.times[b]).then(a.cmp(&b)))
    }
}

/// Time of the largest frame-to-frame change `|u[s] − u[s−1]|`, reported as
/// `s · dt`.
pub fn activation_time(u: &HeartPotential) -> Result<ActivationMap> {
    let m = u.data();
    if m.ncols() < 3 {
        return Err(Error::BelowMinimum("activation needs at least three frames"));
    }
    let mut times = Vec::with_capacity(m.nrows());
    let mut degenerate = Vec::with_capacity(m.nrows());
    for i in 0..m.nrows() {
        let mut best = (0, 0.0);
        for s in 1..m.ncols() {
            let d = (m[(i, s)] - m[(i, s - 1)]).abs();
            if d > best.1 {
                best = (s, d);
            }
        }
        degenerate.push(best.1 == 0.0);
        times.push(best.0 as f64 * u.dt());
    }
    Ok(ActivationMap { times, degenerate })
}

/// Distance from the earliest-activating node of `est` to the pacing node.
pub fn localization_distance(est: &HeartPotential, mesh: &SurfaceMesh, site: PacingSite) -> Result<f64> {
    if est.nodes() != mesh.len() {
        return Err(Error::shape("potential nodes", mesh.len(), est.nodes()));
    }
    if site.node >= mesh.len() {
        return Err(Error::param("pacing node", "out of range"));
    }
    let earliest = activation_time(est)?
        .earliest()
        .ok_or(Error::Degenerate("every node trace is flat"))?;
    Ok(distance(mesh.node(earliest), mesh.node(site.node)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cardiac::{simulate_ap, APParams};
    use crate::forge::make_base_geometry;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut r = rng::stream(seed, 0);
        Matrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
    }

    #[test]
    fn rmse_cases() {
        let a = random(4, 5, 1);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let b = a.add_scalar(-0.75);
        assert!((rmse(&a, &b).unwrap() - 0.75).abs() < 1e-15);
        assert!(rmse(&a, &random(5, 4, 1)).is_err());
    }

    #[test]
    fn rmse_matches_two_pass() {
        let (a, b) = (random(9, 7, 2), random(9, 7, 3));
        let mut sq = Vec::new();
        for i in 0..9 {
            for j in 0..7 {
                sq.push((a[(i, j)] - b[(i, j)]) * (a[(i, j)] - b[(i, j)]));
            }
        }
        let naive = libm::sqrt(sq.iter().sum::<f64>() / sq.len() as f64);
        assert!((rmse(&a, &b).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn correlation_cases() {
        let u = random(6, 8, 4);
        for f in [spatial_cc, temporal_cc] {
            assert!((f(&u, &u).unwrap() - 1.0).abs() < 1e-12);
            assert!((f(&-&u, &u).unwrap() + 1.0).abs() < 1e-12);
            assert!((f(&(&u * 2.0).add_scalar(5.0), &u).unwrap() - 1.0).abs() < 1e-12);
            assert!(matches!(f(&Matrix::zeros(6, 8), &u), Err(Error::Degenerate(_))));
        }
    }

    #[test]
    fn constant_frames_are_skipped() {
        let mut u = random(5, 6, 5);
        u.set_column(0, &nalgebra::DVector::from_element(5, 0.3));
        let v = random(5, 6, 6);
        let per_frame: Vec<f64> = (1..6)
            .map(|t| pearson(u.column(t).iter().copied(), v.column(t).iter().copied()).unwrap())
            .collect();
        let want = per_frame.iter().sum::<f64>() / 5.0;
        assert!((spatial_cc(&u, &v).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn activation_of_step_and_flat_traces() {
        let mut m = Matrix::zeros(2, 10);
        for s in 4..10 {
            m[(0, s)] = 1.0;
        }
        let u = HeartPotential::new(m, 0.5).unwrap();
        let a = activation_time(&u).unwrap();
        assert!((a.times[0] - 4.0 * 0.5).abs() <= 0.5);
        assert_eq!((a.times[1], a.degenerate[1]), (0.0, true));
        assert_eq!(a.earliest(), Some(0));
    }

    #[test]
    fn paced_node_activates_first_and_localizes_exactly() {
        let mesh = make_base_geometry(64, 96, 1).unwrap().source;
        let site = PacingSite { node: 23, onset: 0.0 };
        let u = simulate_ap(&mesh, site, &APParams::default()).unwrap();
        let a = activation_time(&u).unwrap();
        assert_eq!(a.earliest(), Some(23));
        assert_eq!(localization_distance(&u, &mesh, site).unwrap(), 0.0);
    }

    #[test]
    fn localization_to_neighbor_is_edge_length() {
        let mesh = make_base_geometry(64, 96, 1).unwrap().source;
        let nb = mesh.neighbors(10)[0];
        let mut m = Matrix::zeros(64, 5);
        for s in 2..5 {
            m[(nb, s)] = 1.0;
        }
        let u = HeartPotential::new(m, 1.0).unwrap();
        let d = localization_distance(&u, &mesh, PacingSite { node: 10, onset: 0.0 }).unwrap();
        assert_eq!(d, distance(mesh.node(10), mesh.node(nb)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn correlations_affine_invariant(seed in 0u64..10_000, scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
            let (u, v) = (random(5, 7, seed), random(5, 7, seed + 1));
            for f in [spatial_cc, temporal_cc] {
                let base = f(&u, &v).unwrap();
                prop_assert!((-1.0..=1.0).contains(&base));
                prop_assert!((f(&(&u * scale).add_scalar(shift), &v).unwrap() - base).abs() < 1e-10);
                prop_assert!((f(&-&u, &v).unwrap() + base).abs() < 1e-10);
            }
        }

        #[test]
        fn rmse_symmetric_and_triangle(seed in 0u64..10_000) {
            let (a, b, c) = (random(4, 6, seed), random(4, 6, seed + 1), random(4, 6, seed + 2));
            prop_assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
            prop_assert!(rmse(&a, &c).unwrap() <= rmse(&a, &b).unwrap() + rmse(&b, &c).unwrap() + 1e-12);
        }

        #[test]
        fn localization_bounded_by_diameter(seed in 0u64..1000) {
            let mesh = make_base_geometry(32, 48, 2).unwrap().source;
            let u = HeartPotential::new(random(32, 6, seed), 1.0).unwrap();
            let d = localization_distance(&u, &mesh, PacingSite { node: (seed % 32) as usize, onset: 0.0 }).unwrap();
            prop_assert!(d >= 0.0 && d <= mesh.diameter() + 1e-9);
        }
    }
}
