use alloc::vec::Vec;

use nalgebra::Cholesky;

use super::laplacian::Laplacian;
use crate::cardiac::{BodyRecording, HeartPotential};
use crate::forge::ForwardOperator;
use crate::{Error, Matrix, Result};

/// Diagonal floor added to every normal matrix.
pub const RIDGE: f64 = 1e-10;

/// Penalised least squares `min ‖y − H u‖² + λ ‖L u‖²` with the penalty
/// matrix `λ LᵀL` cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Tikhonov {
    lambda: f64,
    penalty: Matrix,
}

impl Tikhonov {
    pub fn new(laplacian: &Laplacian, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda", "must be non-negative"));
        }
        let l = laplacian.matrix();
        Ok(Tikhonov {
            lambda,
            penalty: l.transpose() * l * lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Solves every column of `y` at once.
    pub fn solve_matrix(&self, h: &Matrix, y: &Matrix) -> Result<Matrix> {
        let n = self.penalty.nrows();
        if h.ncols() != n {
            return Err(Error::shape("operator columns", n, h.ncols()));
        }
        if h.nrows() != y.nrows() {
            return Err(Error::shape("recording rows", h.nrows(), y.nrows()));
        }
        let mut a = h.transpose() * h + &self.penalty;
        for i in 0..n {
            a[(i, i)] += RIDGE;
        }
        let rhs = h.transpose() * y;
        let chol = Cholesky::new(a).ok_or(Error::Singular)?;
        let u = chol.solve(&rhs);
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular);
        }
        Ok(u)
    }

    pub fn solve(&self, h: &ForwardOperator, y: &BodyRecording) -> Result<HeartPotential> {
        HeartPotential::new(self.solve_matrix(h.matrix(), y.data())?, y.dt())
    }
}

pub fn tikhonov_solve(h: &ForwardOperator, y: &BodyRecording, lambda: f64, l: &Laplacian) -> Result<HeartPotential> {
    Tikhonov::new(l, lambda)?.solve(h, y)
}

/// One point of the L-curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LCurvePoint {
    pub lambda: f64,
    /// `‖y − H u‖_F`.
    pub residual: f64,
    /// `‖L u‖_F`.
    pub seminorm: f64,
}

pub fn lcurve(h: &Matrix, y: &Matrix, l: &Laplacian, lambdas: &[f64]) -> Result<Vec<LCurvePoint>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let u = Tikhonov::new(l, lambda)?.solve_matrix(h, y)?;
            Ok(LCurvePoint {
                lambda,
                residual: (y - h * &u).norm(),
                seminorm: (l.matrix() * &u).norm(),
            })
        })
        .collect()
}

/// λ at the point of largest curvature of the log–log L-curve, measured by
/// the circle through each point and its neighbours.
pub fn lcurve_corner(points: &[LCurvePoint]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::BelowMinimum("L-curve needs at least three points"));
    }
    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (libm::log(p.residual.max(f64::MIN_POSITIVE)), libm::log(p.seminorm.max(f64::MIN_POSITIVE))))
        .collect();
    let mut best = (1, f64::NEG_INFINITY);
    for k in 1..xy.len() - 1 {
        let (a, b, c) = (xy[k - 1], xy[k], xy[k + 1]);
        let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        let d = |p: (f64, f64), q: (f64, f64)| libm::hypot(p.0 - q.0, p.1 - q.1);
        let denom = d(a, b) * d(b, c) * d(a, c);
        let curvature = if denom > 0.0 { 2.0 * cross.abs() / denom } else { 0.0 };
        if curvature > best.1 {
            best = (k, curvature);
        }
    }
    Ok(points[best.0].lambda)
}
