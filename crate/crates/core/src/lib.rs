//! Numerical core for neural-network Poisson surrogates in plasma-fluid
//! simulations.
//!
//! - [`field`]: uniform structured grids, scalar and vector fields, finite
//!   difference operators, error norms and the binary field format.
//! - [`analytic`]: the sine-series solution of the zero-Dirichlet rectangle,
//!   single-mode fields and the input normalization constants.
//! - [`linsolve`]: matrix-free Poisson operators with Jacobi and conjugate
//!   gradient solvers, Cartesian and axisymmetric.
//! - [`dataset`]: `random_c` and `fourier_N_p` charge generators, dataset
//!   directories with manifests, and metric tables.

pub mod analytic;
pub mod consts;
pub mod dataset;
pub mod error;
pub mod field;
pub mod linsolve;

pub use error::{Error, Result};
pub use field::{Geometry, GridSpec, ScalarField, VectorField};

/// Anything able to produce a potential from a charge density `R = ρ/ε₀`
/// on a zero-Dirichlet domain.
pub trait PoissonPredictor {
    fn predict(&self, rhs: &ScalarField) -> Result<ScalarField>;

    fn name(&self) -> String;
}
