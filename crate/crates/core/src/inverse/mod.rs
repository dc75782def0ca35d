//! Joint recovery of source potentials and the corrected operator.
//!
//! The source is estimated with a Laplacian-penalised least-squares solve;
//! the operator is corrected by searching the generator's latent space with
//! a bounded derivative-free trust-region method. The two alternate until
//! neither changes.

mod alternate;
mod dfo;
mod laplacian;
mod tikhonov;

pub use alternate::{alternate_optimize, alternate_optimize_with, detect_error_source, Convergence, InverseProblem, InverseSolution, OuterStep};
pub use dfo::{dfo_minimize, DfoConfig, DfoResult, DfoStatus};
pub use laplacian::{build_laplacian, laplacian_from_edges, Laplacian};
pub use tikhonov::{lcurve, lcurve_corner, tikhonov_solve, LCurvePoint, Tikhonov, RIDGE};
