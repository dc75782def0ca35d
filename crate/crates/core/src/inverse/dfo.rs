//! Bound-constrained derivative-free minimisation in the style of BOBYQA.
//!
//! A quadratic model interpolates the objective at `2n + 1` points. Each
//! refit keeps the Hessian as close as possible (Frobenius norm) to the
//! previous one. Steps come from a box-constrained truncated conjugate
//! gradient solve inside the trust region, and the interpolation set is
//! maintained through the Lagrange functions of the fit. Every evaluated
//! point lies inside the box.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;

use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DfoConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Maximum number of objective evaluations.
    pub budget: usize,
    /// Initial trust radius.
    pub rho_begin: f64,
    /// Final trust radius; reaching it ends the run.
    pub rho_end: f64,
}

impl DfoConfig {
    /// The box `[-bound, bound]^dim`.
    pub fn cube(dim: usize, bound: f64) -> Self {
        DfoConfig {
            lower: vec![-bound; dim],
            upper: vec![bound; dim],
            budget: 150,
            rho_begin: 0.5,
            rho_end: 1e-3,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lower.len();
        if n == 0 || self.upper.len() != n {
            return Err(Error::shape("bounds", n, self.upper.len()));
        }
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::param("bounds", "need finite lower < upper"));
            }
            if hi - lo < 2.0 * self.rho_begin {
                return Err(Error::param("rho_begin", "box is narrower than twice the initial radius"));
            }
        }
        if self.budget < 2 * n + 1 {
            return Err(Error::param("budget", "must be at least 2·dim + 1"));
        }
        if !(self.rho_end > 0.0 && self.rho_end <= self.rho_begin) {
            return Err(Error::param("rho_end", "need 0 < rho_end <= rho_begin"));
        }
        Ok(())
    }

    fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DfoStatus {
    /// The trust radius reached `rho_end`.
    Converged,
    /// The evaluation budget ran out first.
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DfoResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub status: DfoStatus,
    /// Best value seen after each evaluation.
    pub history: Vec<f64>,
}

struct Evaluator<'a, F> {
    f: F,
    cfg: &'a DfoConfig,
    count: usize,
    history: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Evaluator<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        debug_assert!(x
            .iter()
            .zip(&self.cfg.lower)
            .zip(&self.cfg.upper)
            .all(|((v, lo), hi)| v >= lo && v <= hi));
        let v = (self.f)(x)?;
        if !v.is_finite() {
            return Err(Error::NonFinite("objective"));
        }
        self.count += 1;
        let best = self.history.last().map_or(v, |b: &f64| b.min(v));
        self.history.push(best);
        Ok(v)
    }

    fn exhausted(&self) -> bool {
        self.count >= self.cfg.budget
    }
}

/// Interpolation set and the quadratic model `f_opt + g·s + ½ sᵀ H s`
/// around the best point.
struct Model {
    n: usize,
    pts: Vec<Vec<f64>>,
    fvals: Vec<f64>,
    kopt: usize,
    grad: Vec<f64>,
    hess: Matrix,
    /// Inverse of the interpolation system, in coordinates scaled by `scale`.
    inverse: Matrix,
    scale: f64,
}

impl Model {
    fn xopt(&self) -> &[f64] {
        &self.pts[self.kopt]
    }

    fn fopt(&self) -> f64 {
        self.fvals[self.kopt]
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.xopt()).map(|(a, b)| (a - b) / self.scale).collect()
    }

    /// Refits around the current best point, keeping the Hessian change
    /// minimal. Returns false when the interpolation system is singular.
    fn refit(&mut self, scale: f64) -> bool {
        let (n, m) = (self.n, self.pts.len());
        self.scale = scale;
        let ys: Vec<Vec<f64>> = self.pts.iter().map(|p| self.scaled(p)).collect();
        let size = m + n + 1;
        let mut w = Matrix::zeros(size, size);
        for j in 0..m {
            for k in 0..m {
                let d: f64 = ys[j].iter().zip(&ys[k]).map(|(a, b)| a * b).sum();
                w[(j, k)] = 0.5 * d * d;
            }
            w[(j, m)] = 1.0;
            w[(m, j)] = 1.0;
            for i in 0..n {
                w[(j, m + 1 + i)] = ys[j][i];
                w[(m + 1 + i, j)] = ys[j][i];
            }
        }
        let Some(inverse) = w.lu().try_inverse() else {
            return false;
        };
        if inverse.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let old = &self.hess * (scale * scale);
        let fopt = self.fopt();
        let mut rhs = DVector::zeros(size);
        for j in 0..m {
            let y = DVector::from_column_slice(&ys[j]);
            rhs[j] = self.fvals[j] - fopt - 0.5 * y.dot(&(&old * &y));
        }
        let sol = &inverse * rhs;
        let mut hess = old;
        for (k, y) in ys.iter().enumerate() {
            let y = DVector::from_column_slice(y);
            hess += &y * y.transpose() * sol[k];
        }
        self.hess = hess / (scale * scale);
        self.grad = (0..n).map(|i| sol[m + 1 + i] / scale).collect();
        self.inverse = inverse;
        true
    }

    /// Values of every Lagrange function at `x`.
    fn lagrange(&self, x: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n, self.pts.len());
        let y = self.scaled(x);
        let mut basis = DVector::zeros(m + n + 1);
        for (j, p) in self.pts.iter().enumerate() {
            let yj = self.scaled(p);
            let d: f64 = yj.iter().zip(&y).map(|(a, b)| a * b).sum();
            basis[j] = 0.5 * d * d;
        }
        basis[m] = 1.0;
        for i in 0..n {
            basis[m + 1 + i] = y[i];
        }
        // ℓ_k(x) = Σ_r W⁻¹[r, k] · basis[r], W symmetric
        (0..m).map(|k| self.inverse.column(k).dot(&basis)).collect()
    }

    /// Gradient of Lagrange function `k` at the best point (unscaled).
    fn lagrange_gradient(&self, k: usize) -> Vec<f64> {
        let m = self.pts.len();
        (0..self.n).map(|i| self.inverse[(m + 1 + i, k)] / self.scale).collect()
    }

    fn predicted_decrease(&self, s: &[f64]) -> f64 {
        let sv = DVector::from_column_slice(s);
        let gs: f64 = self.grad.iter().zip(s).map(|(a, b)| a * b).sum();
        -(gs + 0.5 * sv.dot(&(&self.hess * &sv)))
    }

    fn dist(&self, k: usize) -> f64 {
        norm(&sub(&self.pts[k], self.xopt()))
    }
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Truncated CG for `min g·s + ½ sᵀHs` with `‖s‖ ≤ delta` and
/// `lo ≤ x + s ≤ hi`. Variables that hit a bound are frozen and CG restarts.
fn trust_step(g: &[f64], h: &Matrix, x: &[f64], lo: &[f64], hi: &[f64], delta: f64) -> Vec<f64> {
    let n = g.len();
    let mut s = vec![0.0; n];
    let mut fixed: Vec<bool> = (0..n)
        .map(|i| (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0))
        .collect();
    let hv = |v: &[f64]| -> Vec<f64> { (h * DVector::from_column_slice(v)).iter().copied().collect() };
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(p, q)| p * q).sum() };
    for _restart in 0..=n {
        let hs = hv(&s);
        let mut r: Vec<f64> = (0..n).map(|i| if fixed[i] { 0.0 } else { -(g[i] + hs[i]) }).collect();
        let mut d = r.clone();
        let mut rr = dot(&r, &r);
        let mut hit_bound = None;
        for _ in 0..n {
            if rr <= 1e-24 {
                return s;
            }
            let mut hd = hv(&d);
            for i in 0..n {
                if fixed[i] {
                    hd[i] = 0.0;
                }
            }
            let dhd = dot(&d, &hd);
            // largest α with ‖s + α d‖ = delta
            let (ss, sd, dd) = (dot(&s, &s), dot(&s, &d), dot(&d, &d));
            let disc = (sd * sd + dd * (delta * delta - ss)).max(0.0);
            let alpha_ball = (-sd + libm::sqrt(disc)) / dd;
            let mut alpha_box = f64::INFINITY;
            let mut blocking = None;
            for i in 0..n {
                if fixed[i] || d[i] == 0.0 {
                    continue;
                }
                let room = if d[i] > 0.0 { hi[i] - x[i] - s[i] } else { lo[i] - x[i] - s[i] };
                let a = (room / d[i]).max(0.0);
                if a < alpha_box {
                    alpha_box = a;
                    blocking = Some(i);
                }
            }
            let alpha_cg = if dhd > 0.0 { rr / dhd } else { f64::INFINITY };
            let alpha = alpha_cg.min(alpha_ball).min(alpha_box);
            for i in 0..n {
                s[i] += alpha * d[i];
            }
            if alpha == alpha_box && alpha_box < alpha_ball.min(alpha_cg) {
                let i = blocking.expect("blocking index");
                s[i] = if d[i] > 0.0 { hi[i] - x[i] } else { lo[i] - x[i] };
                fixed[i] = true;
                hit_bound = Some(i);
                break;
            }
            if alpha == alpha_ball {
                return s;
            }
            for i in 0..n {
                r[i] -= alpha * hd[i];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            for i in 0..n {
                d[i] = r[i] + beta * d[i];
            }
            rr = rr_new;
        }
        if hit_bound.is_none() {
            return s;
        }
    }
    s
}

/// Minimises `f` over the box starting from `x0` (clamped into the box).
pub fn dfo_minimize(mut f: impl FnMut(&[f64]) -> Result<f64>, x0: &[f64], cfg: &DfoConfig) -> Result<DfoResult> {
    cfg.validate()?;
    let n = cfg.dim();
    if x0.len() != n {
        return Err(Error::shape("start point", n, x0.len()));
    }
    let mut start = x0.to_vec();
    cfg.clamp(&mut start);
    let mut ev = Evaluator {
        f: &mut f,
        cfg,
        count: 0,
        history: Vec::with_capacity(cfg.budget),
    };
    let mut rho = cfg.rho_begin;
    let mut delta = rho;
    let mut model = initial_model(&mut ev, &start, rho, cfg)?;
    if !model.refit(delta) {
        return Err(Error::Singular);
    }

    let status = loop {
        if ev.exhausted() {
            break DfoStatus::BudgetExhausted;
        }
        let xopt = model.xopt().to_vec();
        let s = trust_step(&model.grad, &model.hess, &xopt, &cfg.lower, &cfg.upper, delta);
        let snorm = norm(&s);
        let mut ratio = -1.0;
        let mut stepped = false;
        if snorm >= 0.5 * rho {
            let mut x = xopt.iter().zip(&s).map(|(a, b)| a + b).collect::<Vec<_>>();
            cfg.clamp(&mut x);
            if model.pts.iter().all(|p| norm(&sub(p, &x)) > 1e-3 * rho) {
                let pred = model.predicted_decrease(&s);
                let fx = ev.eval(&x)?;
                let fopt = model.fopt();
                if pred > 0.0 {
                    ratio = (fopt - fx) / pred;
                }
                delta = if ratio <= 0.1 {
                    0.5 * delta
                } else if ratio <= 0.7 {
                    (0.5 * delta).max(snorm)
                } else {
                    (0.5 * delta).max(2.0 * snorm)
                };
                if delta <= 1.5 * rho {
                    delta = rho;
                }
                replace_point(&mut model, x, fx, delta, fx < fopt);
                if !model.refit(delta) {
                    model = initial_model(&mut ev, model.xopt(), rho, cfg)?;
                    if !model.refit(delta) {
                        return Err(Error::Singular);
                    }
                }
                stepped = true;
            }
        }
        if !stepped {
            delta = (0.1 * delta).max(rho);
        }
        if ratio >= 0.1 {
            continue;
        }
        if ev.exhausted() {
            break DfoStatus::BudgetExhausted;
        }
        // poorly placed points are moved before the radius shrinks
        let far = (0..model.pts.len())
            .filter(|&k| k != model.kopt)
            .max_by(|&a, &b| model.dist(a).total_cmp(&model.dist(b)));
        if let Some(k) = far {
            let dist = model.dist(k);
            if dist > 2.0 * delta.max(rho) && geometry_step(&mut ev, &mut model, k, (0.1 * dist).min(delta).max(rho), cfg, rho)? {
                continue;
            }
        }
        if delta > rho {
            continue;
        }
        if rho <= cfg.rho_end {
            break DfoStatus::Converged;
        }
        let ratio_end = rho / cfg.rho_end;
        let next = if ratio_end <= 16.0 {
            cfg.rho_end
        } else if ratio_end <= 250.0 {
            libm::sqrt(rho * cfg.rho_end)
        } else {
            0.1 * rho
        };
        delta = (0.5 * rho).max(next);
        rho = next;
    };
    Ok(DfoResult {
        x: model.xopt().to_vec(),
        f: model.fopt(),
        evaluations: ev.count,
        status,
        history: ev.history,
    })
}

/// `x0` plus a positive and a negative step along each axis; a step that
/// would leave the box is mirrored inward.
fn initial_model<F: FnMut(&[f64]) -> Result<f64>>(
    ev: &mut Evaluator<F>,
    x0: &[f64],
    rho: f64,
    cfg: &DfoConfig,
) -> Result<Model> {
    let n = x0.len();
    let mut pts = vec![x0.to_vec()];
    for i in 0..n {
        let (up, down) = if x0[i] + rho > cfg.upper[i] {
            (-rho, -2.0 * rho)
        } else if x0[i] - rho < cfg.lower[i] {
            (rho, 2.0 * rho)
        } else {
            (rho, -rho)
        };
        for step in [up, down] {
            let mut p = x0.to_vec();
            p[i] += step;
            cfg.clamp(&mut p);
            pts.push(p);
        }
    }
    let mut fvals = Vec::with_capacity(pts.len());
    for p in &pts {
        fvals.push(ev.eval(p)?);
    }
    let kopt = (0..fvals.len())
        .min_by(|&a, &b| fvals[a].total_cmp(&fvals[b]).then(a.cmp(&b)))
        .expect("non-empty");
    Ok(Model {
        n,
        pts,
        fvals,
        kopt,
        grad: vec![0.0; n],
        hess: Matrix::zeros(n, n),
        inverse: Matrix::zeros(0, 0),
        scale: rho,
    })
}

/// Swaps `x` into the set in place of the point whose removal best keeps
/// the set well poised, favouring points far from the best one.
fn replace_point(model: &mut Model, x: Vec<f64>, fx: f64, delta: f64, improves: bool) {
    let ell = model.lagrange(&x);
    let mut best = (None, 0.0);
    for (k, l) in ell.iter().enumerate() {
        if k == model.kopt && !improves {
            continue;
        }
        let w = l.abs() * libm::pow((model.dist(k) / delta).max(1.0), 4.0);
        if w > best.1 {
            best = (Some(k), w);
        }
    }
    let Some(k) = best.0 else { return };
    if best.1 < 1e-12 {
        return;
    }
    model.pts[k] = x;
    model.fvals[k] = fx;
    if improves {
        model.kopt = k;
    }
}

/// Replaces point `k` by a point within `radius` of the best point where
/// its Lagrange function is large. Returns false when every candidate
/// collapses onto an existing point.
fn geometry_step<F: FnMut(&[f64]) -> Result<f64>>(
    ev: &mut Evaluator<F>,
    model: &mut Model,
    k: usize,
    radius: f64,
    cfg: &DfoConfig,
    rho: f64,
) -> Result<bool> {
    let xopt = model.xopt().to_vec();
    let mut directions: Vec<Vec<f64>> = Vec::new();
    directions.push(model.lagrange_gradient(k));
    for (j, p) in model.pts.iter().enumerate() {
        if j != model.kopt {
            directions.push(sub(p, &xopt));
        }
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for d in directions {
        let len = norm(&d);
        if len == 0.0 {
            continue;
        }
        for sign in [1.0, -1.0] {
            let mut x: Vec<f64> = xopt.iter().zip(&d).map(|(a, b)| a + sign * radius * b / len).collect();
            cfg.clamp(&mut x);
            if model.pts.iter().any(|p| norm(&sub(p, &x)) <= 1e-3 * rho) {
                continue;
            }
            let v = model.lagrange(&x)[k].abs();
            if best.as_ref().is_none_or(|b| v > b.1) {
                best = Some((x, v));
            }
        }
    }
    let Some((x, _)) = best else { return Ok(false) };
    let fx = ev.eval(&x)?;
    let improves = fx < model.fopt();
    model.pts[k] = x;
    model.fvals[k] = fx;
    if improves {
        model.kopt = k;
    }
    if !model.refit(radius.max(rho)) {
        let xopt = model.xopt().to_vec();
        *model = initial_model(ev, &xopt, rho, cfg)?;
        if !model.refit(rho) {
            return Err(Error::Singular);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::cell::Cell;
    use proptest::prelude::*;

    fn sphere(c: &[f64]) -> impl Fn(&[f64]) -> Result<f64> + '_ {
        move |z| Ok(z.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    #[test]
    fn quadratic_minimum_within_budget() {
        let c = [0.7, -1.2, 2.1, 0.3];
        let cfg = DfoConfig {
            budget: 200,
            rho_end: 1e-6,
            ..DfoConfig::cube(4, 3.0)
        };
        let out = dfo_minimize(sphere(&c), &[0.0; 4], &cfg).unwrap();
        let err = norm(&sub(&out.x, &c));
        assert!(err < 1e-4, "error {err} after {} evaluations", out.evaluations);
        assert!(out.evaluations <= 200);
    }

    #[test]
    fn coupled_quadratic_is_solved() {
        // f = (z−c)ᵀ A (z−c) with a non-diagonal A
        let c = [1.0, -0.5, 0.25];
        let a = Matrix::from_row_slice(3, 3, &[3.0, 1.0, 0.5, 1.0, 2.0, 0.3, 0.5, 0.3, 1.5]);
        let f = |z: &[f64]| {
            let d = DVector::from_iterator(3, z.iter().zip(&c).map(|(x, y)| x - y));
            Ok(d.dot(&(&a * &d)))
        };
        let cfg = DfoConfig {
            budget: 300,
            rho_end: 1e-6,
            ..DfoConfig::cube(3, 3.0)
        };
        let out = dfo_minimize(f, &[0.0; 3], &cfg).unwrap();
        assert!(norm(&sub(&out.x, &c)) < 1e-4);
    }

    #[test]
    fn exterior_minimum_lands_on_clamp() {
        let c = [5.0, -0.5, -9.0, 1.0];
        let out = dfo_minimize(
            sphere(&c),
            &[0.0; 4],
            &DfoConfig {
                budget: 300,
                rho_end: 1e-6,
                ..DfoConfig::cube(4, 3.0)
            },
        )
        .unwrap();
        let want = [3.0, -0.5, -3.0, 1.0];
        assert!(norm(&sub(&out.x, &want)) < 1e-4, "{:?}", out.x);
    }

    #[test]
    fn budget_flag_and_monotone_history() {
        let c = [0.3; 6];
        let cfg = DfoConfig {
            budget: 20,
            ..DfoConfig::cube(6, 3.0)
        };
        let out = dfo_minimize(sphere(&c), &[0.0; 6], &cfg).unwrap();
        assert_eq!(out.status, DfoStatus::BudgetExhausted);
        assert!(out.evaluations <= 20);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.f <= out.history[0]);
    }

    #[test]
    fn rough_objective_from_a_box_corner_terminates() {
        let cfg = DfoConfig {
            budget: 10_000,
            ..DfoConfig::cube(16, 3.0)
        };
        // quadratic plus deterministic roughness of size 1e-3
        let rough = |x: &[f64]| {
            let h = x.iter().fold(0u64, |a, v| a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ v.to_bits());
            Ok(x.iter().map(|v| (v - 2.0) * (v - 2.0)).sum::<f64>() + 1e-3 * (h % 1000) as f64 / 1000.0)
        };
        let out = dfo_minimize(rough, &[-3.0; 16], &cfg).unwrap();
        assert_eq!(out.status, DfoStatus::Converged);
        assert!(out.x.iter().all(|v| (v - 2.0).abs() < 0.1));
    }

    #[test]
    fn rejects_invalid_configuration() {
        let f = sphere(&[0.0; 2]);
        assert!(dfo_minimize(&f, &[0.0; 2], &DfoConfig { budget: 4, ..DfoConfig::cube(2, 1.0) }).is_err());
        assert!(dfo_minimize(&f, &[0.0; 3], &DfoConfig::cube(2, 1.0)).is_err());
        let mut bad = DfoConfig::cube(2, 1.0);
        bad.lower[0] = 2.0;
        assert!(dfo_minimize(&f, &[0.0; 2], &bad).is_err());
        let nan = |_: &[f64]| Ok(f64::NAN);
        assert!(matches!(dfo_minimize(nan, &[0.0; 2], &DfoConfig::cube(2, 1.0)), Err(Error::NonFinite(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn evaluations_stay_in_box_and_never_worsen_start(
            c in prop::collection::vec(-6.0f64..6.0, 3),
            x0 in prop::collection::vec(-2.0f64..2.0, 3),
            wiggle in 0.0f64..2.0,
        ) {
            let outside = Cell::new(false);
            let f = |z: &[f64]| {
                if z.iter().any(|v| v.abs() > 2.0) {
                    outside.set(true);
                }
                Ok(z.iter().zip(&c).map(|(a, b)| (a - b) * (a - b) + wiggle * libm::sin(3.0 * a)).sum())
            };
            let cfg = DfoConfig { budget: 80, rho_begin: 0.4, ..DfoConfig::cube(3, 2.0) };
            let out = dfo_minimize(f, &x0, &cfg).unwrap();
            prop_assert!(!outside.get());
            prop_assert!(out.f <= out.history[0]);
            prop_assert!(out.x.iter().all(|v| v.abs() <= 2.0));
        }
    }
}
