//! Matrix-free Poisson operators and iterative solvers.
//!
//! The operator is assembled implicitly in finite-volume form: every node owns
//! a dual cell of volume `V` (half cells on the boundary, annular measure
//! `∫ r dr` on axisymmetric grids) and every pair of neighbours is coupled
//! through a face transmissibility `T`. `(Aφ)_p = Σ T (φ_p − φ_q)` is then
//! symmetric, positive definite once a Dirichlet edge exists, and `Aφ / V`
//! reproduces the five-point (or conservative axisymmetric) stencil of
//! `−∇²φ`. Neumann edges fall out as faces that do not exist.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::field::{Geometry, GridSpec, ScalarField};

pub type BoundaryFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum EdgeCondition {
    /// Prescribed potential `φ(x, y)` along the edge.
    Dirichlet(BoundaryFn),
    NeumannZero,
}

impl EdgeCondition {
    pub fn zero() -> Self {
        EdgeCondition::Dirichlet(Arc::new(|_, _| 0.0))
    }

    pub fn dirichlet(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        EdgeCondition::Dirichlet(Arc::new(f))
    }

    fn is_dirichlet(&self) -> bool {
        matches!(self, EdgeCondition::Dirichlet(_))
    }
}

impl fmt::Debug for EdgeCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeCondition::Dirichlet(_) => write!(f, "Dirichlet"),
            EdgeCondition::NeumannZero => write!(f, "NeumannZero"),
        }
    }
}

/// Conditions on the four edges: `left` is `x = 0`, `bottom` is `y = 0`
/// (the axis on axisymmetric grids).
#[derive(Debug, Clone)]
pub struct BoundarySpec {
    pub left: EdgeCondition,
    pub right: EdgeCondition,
    pub bottom: EdgeCondition,
    pub top: EdgeCondition,
}

impl BoundarySpec {
    pub fn zero_dirichlet() -> Self {
        Self {
            left: EdgeCondition::zero(),
            right: EdgeCondition::zero(),
            bottom: EdgeCondition::zero(),
            top: EdgeCondition::zero(),
        }
    }

    /// Symmetry axis at `r = 0`, `φ = 0` elsewhere.
    pub fn axisymmetric_zero() -> Self {
        Self {
            bottom: EdgeCondition::NeumannZero,
            ..Self::zero_dirichlet()
        }
    }

    /// Symmetry axis at `r = 0`, `φ = −E_x·x` on `x = 0`, `x = Lx` and
    /// `r = Lr`.
    pub fn axisymmetric_background(ex: f64) -> Self {
        let lift = EdgeCondition::dirichlet(move |x, _| -ex * x);
        Self {
            left: lift.clone(),
            right: lift.clone(),
            bottom: EdgeCondition::NeumannZero,
            top: lift,
        }
    }

    fn validate(&self, grid: &GridSpec) -> Result<()> {
        let any_dirichlet = [&self.left, &self.right, &self.bottom, &self.top]
            .iter()
            .any(|e| e.is_dirichlet());
        if !any_dirichlet {
            return Err(Error::InvalidArgument(
                "at least one Dirichlet edge is required".into(),
            ));
        }
        if grid.geometry == Geometry::Axisymmetric && self.bottom.is_dirichlet() {
            return Err(Error::InvalidArgument(
                "the axis r = 0 of an axisymmetric grid must be a Neumann edge".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final `‖b − Aφ‖₂ / ‖b‖₂`.
    pub residual: f64,
    pub seconds: f64,
    pub converged: bool,
    /// Relative residual after each iteration (index 0 is the initial guess).
    pub history: Vec<f64>,
}

impl SolveReport {
    pub const CSV_HEADER: &'static str = "solver,nodes,rtol,iterations,residual,seconds";

    pub fn csv_row(&self, solver: &str, nodes: usize, rtol: f64) -> String {
        format!(
            "{solver},{nodes},{rtol:e},{},{:e},{:e}",
            self.iterations, self.residual, self.seconds
        )
    }
}

/// Finite-volume form of `−∇²` for a grid and boundary specification.
#[derive(Debug, Clone)]
pub struct PoissonOperator {
    grid: GridSpec,
    fixed: Vec<bool>,
    fixed_values: Vec<f64>,
    /// Transmissibility of the face between `(i, j)` and `(i+1, j)`, per row.
    tx: Vec<f64>,
    /// Transmissibility of the face between `(i, j)` and `(i, j+1)`.
    ty: Vec<f64>,
    volume: Vec<f64>,
    diag: Vec<f64>,
}

fn half_cell(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

impl PoissonOperator {
    pub fn new(grid: GridSpec, bc: &BoundarySpec) -> Result<Self> {
        bc.validate(&grid)?;
        let (nx, ny) = (grid.nx, grid.ny);
        let (dx, dy) = (grid.dx(), grid.dy());
        let hx = half_cell(nx, dx);
        // Cross-section measure of each row: dy (Cartesian) or ∫ r dr.
        let (ay, face_y): (Vec<f64>, Vec<f64>) = match grid.geometry {
            Geometry::Cartesian => (half_cell(ny, dy), vec![1.0 / dy; ny - 1]),
            Geometry::Axisymmetric => {
                let lr = grid.ly;
                let mut ay: Vec<f64> = (0..ny).map(|j| j as f64 * dy * dy).collect();
                ay[0] = dy * dy / 8.0;
                ay[ny - 1] = 0.5 * (lr * lr - (lr - 0.5 * dy).powi(2));
                let faces = (0..ny - 1).map(|j| j as f64 + 0.5).collect();
                (ay, faces)
            }
        };
        let tx: Vec<f64> = ay.iter().map(|a| a / dx).collect();
        let mut ty = vec![0.0; nx * (ny - 1)];
        for j in 0..ny - 1 {
            for i in 0..nx {
                ty[j * nx + i] = hx[i] * face_y[j];
            }
        }
        let mut volume = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                volume[j * nx + i] = hx[i] * ay[j];
            }
        }

        let mut fixed = vec![false; nx * ny];
        let mut fixed_values = vec![0.0; nx * ny];
        let mut mark = |i: usize, j: usize, edge: &EdgeCondition| {
            if let EdgeCondition::Dirichlet(f) = edge {
                let k = j * nx + i;
                if !fixed[k] {
                    fixed[k] = true;
                    fixed_values[k] = f(grid.x(i), grid.y(j));
                }
            }
        };
        for j in 0..ny {
            mark(0, j, &bc.left);
            mark(nx - 1, j, &bc.right);
        }
        for i in 0..nx {
            mark(i, 0, &bc.bottom);
            mark(i, ny - 1, &bc.top);
        }

        let mut diag = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let mut d = 0.0;
                if i > 0 {
                    d += tx[j];
                }
                if i + 1 < nx {
                    d += tx[j];
                }
                if j > 0 {
                    d += ty[k - nx];
                }
                if j + 1 < ny {
                    d += ty[k];
                }
                diag[k] = d;
            }
        }
        Ok(Self {
            grid,
            fixed,
            fixed_values,
            tx,
            ty,
            volume,
            diag,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volume
    }

    pub fn is_fixed(&self, k: usize) -> bool {
        self.fixed[k]
    }

    pub fn unknown_count(&self) -> usize {
        self.fixed.iter().filter(|f| !**f).count()
    }

    /// `y = A x` over unknown nodes; entries of `x` on Dirichlet nodes are
    /// treated as 0 and `y` is 0 there.
    pub fn apply_weighted(&self, x: &[f64], y: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let val = |k: usize| if self.fixed[k] { 0.0 } else { x[k] };
        for j in 0..ny {
            let txj = self.tx[j];
            for i in 0..nx {
                let k = j * nx + i;
                if self.fixed[k] {
                    y[k] = 0.0;
                    continue;
                }
                let xc = x[k];
                let mut acc = 0.0;
                if i > 0 {
                    acc += txj * (xc - val(k - 1));
                }
                if i + 1 < nx {
                    acc += txj * (xc - val(k + 1));
                }
                if j > 0 {
                    acc += self.ty[k - nx] * (xc - val(k - nx));
                }
                if j + 1 < ny {
                    acc += self.ty[k] * (xc - val(k + nx));
                }
                y[k] = acc;
            }
        }
    }

    /// Right-hand side `V R + (couplings to prescribed boundary values)`.
    fn weighted_rhs(&self, rhs: &ScalarField) -> Vec<f64> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut b = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if self.fixed[k] {
                    continue;
                }
                let mut v = self.volume[k] * rhs.values[k];
                let g = |q: usize| if self.fixed[q] { self.fixed_values[q] } else { 0.0 };
                if i > 0 {
                    v += self.tx[j] * g(k - 1);
                }
                if i + 1 < nx {
                    v += self.tx[j] * g(k + 1);
                }
                if j > 0 {
                    v += self.ty[k - nx] * g(k - nx);
                }
                if j + 1 < ny {
                    v += self.ty[k] * g(k + nx);
                }
                b[k] = v;
            }
        }
        b
    }

    fn assemble(&self, unknowns: &[f64]) -> ScalarField {
        let values = unknowns
            .iter()
            .enumerate()
            .map(|(k, v)| if self.fixed[k] { self.fixed_values[k] } else { *v })
            .collect();
        ScalarField { grid: self.grid, values }
    }

    fn check_grid(&self, f: &ScalarField) -> Result<()> {
        if f.grid.nx != self.grid.nx || f.grid.ny != self.grid.ny || f.grid.geometry != self.grid.geometry {
            return Err(Error::ShapeMismatch(format!(
                "operator grid {}x{} ({}) vs field {}x{} ({})",
                self.grid.nx,
                self.grid.ny,
                self.grid.geometry.name(),
                f.grid.nx,
                f.grid.ny,
                f.grid.geometry.name()
            )));
        }
        Ok(())
    }

    /// `‖b − Aφ‖₂ / ‖b‖₂` of the weighted system for a candidate solution.
    pub fn relative_residual(&self, rhs: &ScalarField, phi: &ScalarField) -> Result<f64> {
        self.check_grid(rhs)?;
        self.check_grid(phi)?;
        let b = self.weighted_rhs(rhs);
        let mut ax = vec![0.0; b.len()];
        self.apply_weighted(&phi.values, &mut ax);
        let r: f64 = (0..b.len())
            .filter(|k| !self.fixed[*k])
            .map(|k| (b[k] - ax[k]).powi(2))
            .sum::<f64>()
            .sqrt();
        let bn = norm2(&b);
        Ok(if bn == 0.0 { r } else { r / bn })
    }

    /// Conjugate gradients on the weighted system, optionally warm-started.
    pub fn cg(
        &self,
        rhs: &ScalarField,
        rtol: f64,
        max_iter: usize,
        precond: Preconditioner,
        guess: Option<&ScalarField>,
    ) -> Result<(ScalarField, SolveReport)> {
        check_tolerances(rtol, max_iter)?;
        self.check_grid(rhs)?;
        let start = Instant::now();
        let n = self.grid.len();
        let b = self.weighted_rhs(rhs);
        let bnorm = norm2(&b);
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok((self.assemble(&x), converged_report(start)));
        }
        if let Some(g) = guess {
            self.check_grid(g)?;
            for k in 0..n {
                if !self.fixed[k] {
                    x[k] = g.values[k];
                }
            }
        }
        let mut ap = vec![0.0; n];
        self.apply_weighted(&x, &mut ap);
        let mut r: Vec<f64> = (0..n).map(|k| b[k] - ap[k]).collect();
        let minv: Vec<f64> = (0..n)
            .map(|k| match precond {
                _ if self.fixed[k] => 0.0,
                Preconditioner::None => 1.0,
                Preconditioner::Diagonal => 1.0 / self.diag[k],
            })
            .collect();
        let mut z: Vec<f64> = r.iter().zip(&minv).map(|(a, m)| a * m).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut rel = norm2(&r) / bnorm;
        let mut history = vec![rel];
        let mut iterations = 0;
        while rel > rtol && iterations < max_iter {
            self.apply_weighted(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            iterations += 1;
            rel = norm2(&r) / bnorm;
            history.push(rel);
            for k in 0..n {
                z[k] = r[k] * minv[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        let report = SolveReport {
            iterations,
            residual: rel,
            seconds: start.elapsed().as_secs_f64(),
            converged: rel <= rtol,
            history,
        };
        Ok((self.assemble(&x), report))
    }

    /// Point Jacobi on the weighted system.
    pub fn jacobi(
        &self,
        rhs: &ScalarField,
        rtol: f64,
        max_iter: usize,
    ) -> Result<(ScalarField, SolveReport)> {
        check_tolerances(rtol, max_iter)?;
        self.check_grid(rhs)?;
        let start = Instant::now();
        let n = self.grid.len();
        let b = self.weighted_rhs(rhs);
        let bnorm = norm2(&b);
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok((self.assemble(&x), converged_report(start)));
        }
        let mut ax = vec![0.0; n];
        let mut rel = 1.0;
        let mut history = vec![rel];
        let mut iterations = 0;
        while iterations < max_iter {
            // x ← x + D⁻¹ (b − A x)
            self.apply_weighted(&x, &mut ax);
            for k in 0..n {
                if !self.fixed[k] {
                    x[k] += (b[k] - ax[k]) / self.diag[k];
                }
            }
            iterations += 1;
            self.apply_weighted(&x, &mut ax);
            let rnorm = (0..n)
                .filter(|k| !self.fixed[*k])
                .map(|k| (b[k] - ax[k]).powi(2))
                .sum::<f64>()
                .sqrt();
            rel = rnorm / bnorm;
            history.push(rel);
            if rel <= rtol {
                break;
            }
        }
        let report = SolveReport {
            iterations,
            residual: rel,
            seconds: start.elapsed().as_secs_f64(),
            converged: rel <= rtol,
            history,
        };
        Ok((self.assemble(&x), report))
    }
}

fn converged_report(start: Instant) -> SolveReport {
    SolveReport {
        iterations: 0,
        residual: 0.0,
        seconds: start.elapsed().as_secs_f64(),
        converged: true,
        history: vec![0.0],
    }
}

fn check_tolerances(rtol: f64, max_iter: usize) -> Result<()> {
    if !(rtol > 0.0 && rtol < 1.0) {
        return Err(Error::InvalidArgument(format!("rtol must lie in (0, 1), got {rtol}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be positive".into()));
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `−∇²φ` on unknown nodes with the boundary values of `φ` taken as 0;
/// Dirichlet nodes hold 0.
pub fn apply_operator(grid: &GridSpec, bc: &BoundarySpec, phi: &ScalarField) -> Result<ScalarField> {
    let op = PoissonOperator::new(*grid, bc)?;
    op.check_grid(phi)?;
    let mut y = vec![0.0; grid.len()];
    op.apply_weighted(&phi.values, &mut y);
    for (v, vol) in y.iter_mut().zip(&op.volume) {
        *v /= vol;
    }
    Ok(ScalarField { grid: *grid, values: y })
}

pub fn jacobi_solve(
    rhs: &ScalarField,
    bc: &BoundarySpec,
    rtol: f64,
    max_iter: usize,
) -> Result<(ScalarField, SolveReport)> {
    PoissonOperator::new(rhs.grid, bc)?.jacobi(rhs, rtol, max_iter)
}

pub fn cg_solve(
    rhs: &ScalarField,
    bc: &BoundarySpec,
    rtol: f64,
    max_iter: usize,
    precond: Preconditioner,
) -> Result<(ScalarField, SolveReport)> {
    PoissonOperator::new(rhs.grid, bc)?.cg(rhs, rtol, max_iter, precond, None)
}

/// Axisymmetric solve with diagonal-preconditioned CG at `rtol = 1e-10`.
pub fn solve_cylindrical(rhs: &ScalarField, bc: &BoundarySpec) -> Result<ScalarField> {
    if rhs.grid.geometry != Geometry::Axisymmetric {
        return Err(Error::GeometryMismatch {
            expected: "axisymmetric",
            found: rhs.grid.geometry.name(),
        });
    }
    let op = PoissonOperator::new(rhs.grid, bc)?;
    let (phi, report) = op.cg(rhs, 1e-10, 20 * rhs.grid.len(), Preconditioner::Diagonal, None)?;
    if !report.converged {
        return Err(Error::NotConverged(format!(
            "cylindrical CG stopped at residual {:e} after {} iterations",
            report.residual, report.iterations
        )));
    }
    Ok(phi)
}
