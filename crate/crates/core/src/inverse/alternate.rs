use alloc::vec::Vec;

use super::dfo::{dfo_minimize, DfoConfig};
use super::tikhonov::Tikhonov;
use crate::cardiac::{BodyRecording, HeartPotential};
use crate::forge::ForwardOperator;
use crate::generator::{Conditioned, GeneratorModel, LatentCode};
use crate::som::{classify, LabelMap, SomGrid};
use crate::{Error, Matrix, Result};

/// Recording, prior operator and the pieces needed to correct it.
pub struct InverseProblem<'a> {
    pub y: &'a BodyRecording,
    pub h_i: &'a ForwardOperator,
    pub model: &'a GeneratorModel,
    pub tikhonov: &'a Tikhonov,
}

/// Stopping rule of the outer loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    /// Relative change of the source estimate.
    pub tol_u: f64,
    /// Relative change of the corrected operator.
    pub tol_h: f64,
    pub max_outer: usize,
}

impl Default for Convergence {
    fn default() -> Self {
        Convergence {
            tol_u: 1e-4,
            tol_h: 1e-4,
            max_outer: 10,
        }
    }
}

impl Convergence {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_u > 0.0 && self.tol_h > 0.0) {
            return Err(Error::param("tolerances", "must be positive"));
        }
        if self.max_outer == 0 {
            return Err(Error::param("max_outer", "must be at least 1"));
        }
        Ok(())
    }
}

/// One outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterStep {
    pub outer_iter: usize,
    pub dfo_evals: usize,
    /// `‖y − H_f u‖_F` after the iteration.
    pub residual: f64,
    pub rel_du: f64,
    pub rel_dh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseSolution {
    pub u: HeartPotential,
    pub h_f: ForwardOperator,
    pub z: LatentCode,
    /// Residual at the starting code `z = 0`.
    pub initial_residual: f64,
    pub trace: Vec<OuterStep>,
    /// False when `max_outer` ran out before the changes fell below tolerance.
    pub converged: bool,
}

fn relative_change(new: &Matrix, old: &Matrix) -> f64 {
    let denom = old.norm();
    if denom == 0.0 {
        return if new.norm() == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (new - old).norm() / denom
}

struct Stage<'a> {
    p: &'a InverseProblem<'a>,
    cond: Conditioned,
    /// `H_i − G(H_i, 0)`: shifts generated operators so the origin maps to
    /// the prior exactly.
    anchor: Matrix,
}

impl Stage<'_> {
    fn operator(&self, z: &LatentCode) -> Result<Matrix> {
        Ok(self.p.model.generate_conditioned(&self.cond, z)? + &self.anchor)
    }

    /// Source estimate for operator `h` and its residual.
    fn solve(&self, h: &Matrix) -> Result<(Matrix, f64)> {
        let y = self.p.y.data();
        let u = self.p.tikhonov.solve_matrix(h, y)?;
        let residual = (y - h * &u).norm();
        Ok((u, residual))
    }

    fn objective(&self, z: &[f64]) -> Result<f64> {
        let h = self.operator(&LatentCode::new(z.to_vec())?)?;
        Ok(self.solve(&h)?.1)
    }
}

/// Alternates latent search (operator update) and Tikhonov solves (source
/// update), starting from `z = 0`.
pub fn alternate_optimize(p: &InverseProblem, dfo: &DfoConfig, conv: &Convergence) -> Result<InverseSolution> {
    alternate_optimize_with(p, dfo, conv, |_, _| {})
}

/// [`alternate_optimize`] that hands every outer step and its source
/// estimate to `observe`.
pub fn alternate_optimize_with(
    p: &InverseProblem,
    dfo: &DfoConfig,
    conv: &Convergence,
    mut observe: impl FnMut(&OuterStep, &Matrix),
) -> Result<InverseSolution> {
    conv.validate()?;
    let dim = p.model.latent_dim();
    if dfo.dim() != dim {
        return Err(Error::shape("search box", dim, dfo.dim()));
    }
    if p.y.data().nrows() != p.h_i.matrix().nrows() {
        return Err(Error::shape("recording leads", p.h_i.matrix().nrows(), p.y.data().nrows()));
    }
    let cond = p.model.condition(p.h_i.matrix())?;
    let anchor = p.h_i.matrix() - p.model.generate_conditioned(&cond, &LatentCode::zeros(dim))?;
    let stage = Stage { p, cond, anchor };
    let mut z = LatentCode::zeros(dim);
    let mut h = stage.operator(&z)?;
    let (mut u, initial_residual) = stage.solve(&h)?;
    let mut trace = Vec::new();
    let mut converged = false;
    for outer_iter in 1..=conv.max_outer {
        let found = dfo_minimize(|x| stage.objective(x), z.as_slice(), dfo)?;
        let z_new = LatentCode::new(found.x)?;
        let h_new = stage.operator(&z_new)?;
        let (u_new, residual) = stage.solve(&h_new)?;
        let step = OuterStep {
            outer_iter,
            dfo_evals: found.evaluations,
            residual,
            rel_du: relative_change(&u_new, &u),
            rel_dh: relative_change(&h_new, &h),
        };
        observe(&step, &u_new);
        trace.push(step);
        (z, h, u) = (z_new, h_new, u_new);
        if step.rel_du < conv.tol_u && step.rel_dh < conv.tol_h {
            converged = true;
            break;
        }
    }
    Ok(InverseSolution {
        u: HeartPotential::new(u, p.y.dt())?,
        h_f: ForwardOperator::new(h, p.h_i.id(), None)?,
        z,
        initial_residual,
        trace,
        converged,
    })
}

/// Error class attributed to a recovered code by the labelled map.
pub fn detect_error_source(z: &LatentCode, grid: &SomGrid, labels: &LabelMap) -> Result<usize> {
    classify(grid, labels, z.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cardiac::{add_noise, forward_project, HeartPotential};
    use crate::forge::{apply_error, make_base_geometry, mechanistic_operator, ErrorClass, ErrorSpec};
    use crate::generator::{Architecture, Normalization};
    use crate::inverse::{build_laplacian, tikhonov_solve};
    use crate::rng;
    use alloc::vec;
    use rand::Rng as _;

    struct Case {
        h_i: ForwardOperator,
        y: BodyRecording,
        tik: Tikhonov,
        lap: crate::inverse::Laplacian,
    }

    fn case() -> Case {
        let g = make_base_geometry(12, 16, 3).unwrap();
        let h_i = mechanistic_operator(&g.source, &g.sensor, 0.0).unwrap();
        let spec = ErrorSpec::new([0.0, 0.0, -30.0], [10.0, 0.0, 0.0], 1.0, 0.0, ErrorClass::Compound).unwrap();
        let h_f = apply_error(&g, &spec).unwrap();
        let mut r = rng::stream(5, 0);
        let u = HeartPotential::new(Matrix::from_fn(12, 9, |_, _| r.random_range(0.0..1.0)), 1.0).unwrap();
        let y = add_noise(&forward_project(&h_f, &u).unwrap(), 30.0, 8).unwrap();
        let lap = build_laplacian(&g.source).unwrap();
        let tik = Tikhonov::new(&lap, 1e-3).unwrap();
        Case { h_i, y, tik, lap }
    }

    fn arch() -> Architecture {
        Architecture {
            rows: 16,
            cols: 12,
            latent_dim: 3,
            hidden: vec![8],
        }
    }

    #[test]
    fn residual_trace_never_increases() {
        let c = case();
        let model = GeneratorModel::new(arch(), Normalization::identity(192), 4).unwrap();
        let p = InverseProblem { y: &c.y, h_i: &c.h_i, model: &model, tikhonov: &c.tik };
        let dfo = DfoConfig { budget: 40, ..DfoConfig::cube(3, 3.0) };
        let conv = Convergence { max_outer: 4, ..Convergence::default() };
        let sol = alternate_optimize(&p, &dfo, &conv).unwrap();
        assert!(!sol.trace.is_empty() && sol.trace.len() <= 4);
        let mut prev = sol.initial_residual;
        for step in &sol.trace {
            assert!(step.residual <= prev, "{} > {prev}", step.residual);
            prev = step.residual;
        }
        assert!(sol.z.as_slice().iter().all(|v| v.abs() <= 3.0));
    }

    #[test]
    fn origin_reproduces_the_prior_operator() {
        let c = case();
        // zero weights: the generator ignores the code, so the search cannot
        // move the operator away from the prior
        let model = GeneratorModel::zeros(arch(), Normalization::identity(192)).unwrap();
        let p = InverseProblem { y: &c.y, h_i: &c.h_i, model: &model, tikhonov: &c.tik };
        let sol = alternate_optimize(&p, &DfoConfig { budget: 20, ..DfoConfig::cube(3, 3.0) }, &Convergence::default()).unwrap();
        let direct = tikhonov_solve(&c.h_i, &c.y, 1e-3, &c.lap).unwrap();
        assert!((sol.h_f.matrix() - c.h_i.matrix()).amax() < 1e-15);
        assert!((sol.u.data() - direct.data()).amax() < 1e-12);
        assert!(sol.converged);
        assert_eq!(sol.trace.len(), 1);
    }

    #[test]
    fn observer_sees_every_outer_step() {
        let c = case();
        let model = GeneratorModel::new(arch(), Normalization::identity(192), 9).unwrap();
        let p = InverseProblem { y: &c.y, h_i: &c.h_i, model: &model, tikhonov: &c.tik };
        let dfo = DfoConfig { budget: 30, ..DfoConfig::cube(3, 3.0) };
        let conv = Convergence { max_outer: 3, ..Convergence::default() };
        let mut seen = Vec::new();
        let sol = alternate_optimize_with(&p, &dfo, &conv, |s, u| seen.push((*s, u.clone()))).unwrap();
        assert_eq!(seen.iter().map(|s| s.0).collect::<Vec<_>>(), sol.trace);
        assert_eq!(&seen.last().unwrap().1, sol.u.data());
    }

    #[test]
    fn mismatched_box_is_rejected() {
        let c = case();
        let model = GeneratorModel::zeros(arch(), Normalization::identity(192)).unwrap();
        let p = InverseProblem { y: &c.y, h_i: &c.h_i, model: &model, tikhonov: &c.tik };
        assert!(alternate_optimize(&p, &DfoConfig::cube(2, 3.0), &Convergence::default()).is_err());
        let bad = Convergence { max_outer: 0, ..Convergence::default() };
        assert!(alternate_optimize(&p, &DfoConfig::cube(3, 3.0), &bad).is_err());
    }
}
