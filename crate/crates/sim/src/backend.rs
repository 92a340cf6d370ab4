//! Poisson backends shared by the coupled simulations. Every backend solves
//! `−∇²φ = R` with zero Dirichlet data (and a symmetry axis on axisymmetric
//! grids); non-zero boundary potentials are added by superposition.

use std::fmt;

use plasmanet_core::analytic::solve_analytic;
use plasmanet_core::dataset::default_boundary;
use plasmanet_core::linsolve::{PoissonOperator, Preconditioner};
use plasmanet_core::{Geometry, GridSpec, PoissonPredictor, ScalarField};
use plasmanet_net::NetPredictor;

use crate::{Result, SimError};

#[derive(Clone)]
pub enum PoissonBackend {
    /// Truncated sine series with `modes` terms per direction.
    Analytic { modes: usize },
    Cg { rtol: f64 },
    Network(Box<NetPredictor>),
}

impl PoissonBackend {
    pub fn name(&self) -> String {
        match self {
            PoissonBackend::Analytic { modes } => format!("analytic({modes})"),
            PoissonBackend::Cg { rtol } => format!("cg({rtol:e})"),
            PoissonBackend::Network(p) => format!("network({})", p.label),
        }
    }
}

impl fmt::Debug for PoissonBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A backend bound to one grid. CG keeps its operator and warm-starts from
/// the previous potential.
pub struct PoissonSolver {
    backend: PoissonBackend,
    grid: GridSpec,
    op: Option<PoissonOperator>,
    warm: Option<ScalarField>,
    pub solves: usize,
    pub iterations: usize,
}

impl PoissonSolver {
    pub fn new(backend: PoissonBackend, grid: GridSpec) -> Result<Self> {
        let op = match &backend {
            PoissonBackend::Analytic { modes } => {
                if grid.geometry != Geometry::Cartesian {
                    return Err(SimError::Config("the analytic backend needs a Cartesian grid".into()));
                }
                if *modes == 0 {
                    return Err(SimError::Config("analytic backend needs at least one mode".into()));
                }
                None
            }
            PoissonBackend::Cg { rtol } => {
                if !(*rtol > 0.0 && *rtol < 1.0) {
                    return Err(SimError::Config(format!("cg rtol must lie in (0, 1), got {rtol}")));
                }
                Some(PoissonOperator::new(grid, &default_boundary(&grid))?)
            }
            PoissonBackend::Network(_) => None,
        };
        Ok(Self {
            backend,
            grid,
            op,
            warm: None,
            solves: 0,
            iterations: 0,
        })
    }

    pub fn backend(&self) -> &PoissonBackend {
        &self.backend
    }

    pub fn solve(&mut self, rhs: &ScalarField) -> Result<ScalarField> {
        if rhs.grid != self.grid {
            return Err(SimError::Config("right-hand side grid differs from the solver grid".into()));
        }
        self.solves += 1;
        let phi = match &self.backend {
            PoissonBackend::Analytic { modes } => {
                solve_analytic(rhs, (*modes).min(self.grid.nx - 1), (*modes).min(self.grid.ny - 1))?
            }
            PoissonBackend::Cg { rtol } => {
                let op = self.op.as_ref().expect("operator built for cg");
                let (phi, rep) = op.cg(
                    rhs,
                    *rtol,
                    20 * self.grid.len(),
                    Preconditioner::Diagonal,
                    self.warm.as_ref(),
                )?;
                self.iterations += rep.iterations;
                if !rep.converged {
                    return Err(plasmanet_core::Error::NotConverged(format!(
                        "cg stopped at residual {:e}",
                        rep.residual
                    ))
                    .into());
                }
                self.warm = Some(phi.clone());
                phi
            }
            PoissonBackend::Network(p) => p.predict(rhs)?,
        };
        if let Some(k) = phi.values.iter().position(|v| !v.is_finite()) {
            return Err(SimError::Blowup(k));
        }
        Ok(phi)
    }
}
