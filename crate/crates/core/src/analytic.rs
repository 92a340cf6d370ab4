//! Sine-series solution of `∇²φ = −R` on a rectangle with `φ = 0` on the
//! boundary.
//!
//! `R` is projected on `sin(nπx/Lx) sin(mπy/Ly)` (trapezoid quadrature), each
//! coefficient is divided by `(nπ/Lx)² + (mπ/Ly)²`, and the potential is
//! synthesized back on the grid. Both projection and synthesis are separable
//! so a full solve costs `O(N·nx·ny + N·M·ny)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{trapezoid_weights, Geometry, GridSpec, ScalarField};

/// Coefficients `A_nm`, `n = 1..=n_modes`, `m = 1..=m_modes`, stored with `n`
/// as the outer index.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpectrum {
    pub n_modes: usize,
    pub m_modes: usize,
    pub coeffs: Vec<f64>,
    pub lx: f64,
    pub ly: f64,
}

impl ModeSpectrum {
    pub fn zeros(n_modes: usize, m_modes: usize, lx: f64, ly: f64) -> Result<Self> {
        if n_modes < 1 || m_modes < 1 {
            return Err(Error::InvalidArgument(format!(
                "mode counts must be >= 1, got {n_modes}x{m_modes}"
            )));
        }
        Ok(Self {
            n_modes,
            m_modes,
            coeffs: vec![0.0; n_modes * m_modes],
            lx,
            ly,
        })
    }

    /// Coefficient of mode `(n, m)`, 1-based.
    #[inline]
    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.coeffs[(n - 1) * self.m_modes + (m - 1)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, m: usize, v: f64) {
        self.coeffs[(n - 1) * self.m_modes + (m - 1)] = v;
    }

    /// Squared wavenumber `(nπ/Lx)² + (mπ/Ly)²`.
    #[inline]
    pub fn wavenumber_sq(&self, n: usize, m: usize) -> f64 {
        let kx = n as f64 * PI / self.lx;
        let ky = m as f64 * PI / self.ly;
        kx * kx + ky * ky
    }

    /// Potential coefficients `φ_nm = R_nm / ((nπ/Lx)² + (mπ/Ly)²)`.
    pub fn potential_coeffs(&self) -> ModeSpectrum {
        let mut out = self.clone();
        for n in 1..=self.n_modes {
            for m in 1..=self.m_modes {
                out.set(n, m, self.get(n, m) / self.wavenumber_sq(n, m));
            }
        }
        out
    }
}

/// `sin(kπ·x_i/L)` for `k = 1..=modes`, with the end nodes forced to exactly 0.
fn sine_table(modes: usize, nodes: usize, length: f64) -> Vec<Vec<f64>> {
    let h = length / (nodes - 1) as f64;
    (1..=modes)
        .map(|k| {
            let mut row: Vec<f64> = (0..nodes)
                .map(|i| (k as f64 * PI * i as f64 * h / length).sin())
                .collect();
            row[0] = 0.0;
            row[nodes - 1] = 0.0;
            row
        })
        .collect()
}

fn require_cartesian(grid: &GridSpec) -> Result<()> {
    if grid.geometry != Geometry::Cartesian {
        return Err(Error::GeometryMismatch {
            expected: "cartesian",
            found: grid.geometry.name(),
        });
    }
    Ok(())
}

/// Default mode count per direction: `min(64, n − 1)`.
pub fn default_modes(grid: &GridSpec) -> (usize, usize) {
    ((grid.nx - 1).min(64), (grid.ny - 1).min(64))
}

/// Projects `R` onto the first `n_modes × m_modes` sine modes.
pub fn fourier_coeffs(rhs: &ScalarField, n_modes: usize, m_modes: usize) -> Result<ModeSpectrum> {
    let g = rhs.grid;
    require_cartesian(&g)?;
    if n_modes > g.nx - 1 || m_modes > g.ny - 1 {
        return Err(Error::InvalidArgument(format!(
            "{n_modes}x{m_modes} modes exceed the grid Nyquist limit {}x{}",
            g.nx - 1,
            g.ny - 1
        )));
    }
    let mut spec = ModeSpectrum::zeros(n_modes, m_modes, g.lx, g.ly)?;
    let sx = sine_table(n_modes, g.nx, g.lx);
    let sy = sine_table(m_modes, g.ny, g.ly);
    let wx = trapezoid_weights(g.nx, g.dx());
    let wy = trapezoid_weights(g.ny, g.dy());

    // partial[n][j] = Σ_i w_i sin(nπx_i/Lx) R_ij
    let mut partial = vec![vec![0.0; g.ny]; n_modes];
    for (n, sxn) in sx.iter().enumerate() {
        for j in 0..g.ny {
            let row = &rhs.values[j * g.nx..(j + 1) * g.nx];
            partial[n][j] = row.iter().zip(sxn).zip(&wx).map(|((r, s), w)| r * s * w).sum();
        }
    }
    let scale = 4.0 / (g.lx * g.ly);
    for n in 0..n_modes {
        for (m, sym) in sy.iter().enumerate() {
            let v: f64 = (0..g.ny).map(|j| wy[j] * sym[j] * partial[n][j]).sum();
            spec.set(n + 1, m + 1, scale * v);
        }
    }
    Ok(spec)
}

/// Evaluates `Σ A_nm sin(nπx/Lx) sin(mπy/Ly)` on `grid`.
pub fn synthesize(spec: &ModeSpectrum, grid: &GridSpec) -> Result<ScalarField> {
    require_cartesian(grid)?;
    let sx = sine_table(spec.n_modes, grid.nx, grid.lx);
    let sy = sine_table(spec.m_modes, grid.ny, grid.ly);
    // column[n][j] = Σ_m A_nm sin(mπy_j/Ly)
    let mut column = vec![vec![0.0; grid.ny]; spec.n_modes];
    for n in 0..spec.n_modes {
        for m in 0..spec.m_modes {
            let a = spec.get(n + 1, m + 1);
            if a == 0.0 {
                continue;
            }
            for j in 0..grid.ny {
                column[n][j] += a * sy[m][j];
            }
        }
    }
    let mut out = ScalarField::zeros(*grid);
    for j in 0..grid.ny {
        let row = &mut out.values[j * grid.nx..(j + 1) * grid.nx];
        for n in 0..spec.n_modes {
            let c = column[n][j];
            if c == 0.0 {
                continue;
            }
            for (v, s) in row.iter_mut().zip(&sx[n]) {
                *v += c * s;
            }
        }
    }
    Ok(out)
}

/// Potential of a charge spectrum, synthesized on `grid`. The boundary values
/// are exactly zero.
pub fn potential_from_spectrum(spec: &ModeSpectrum, grid: &GridSpec) -> Result<ScalarField> {
    synthesize(&spec.potential_coeffs(), grid)
}

/// Truncated sine-series solution of `∇²φ = −R`, `φ|∂Ω = 0`.
pub fn solve_analytic(rhs: &ScalarField, n_modes: usize, m_modes: usize) -> Result<ScalarField> {
    let spec = fourier_coeffs(rhs, n_modes, m_modes)?;
    potential_from_spectrum(&spec, &rhs.grid)
}

/// `amplitude · sin(nπx/Lx) sin(mπy/Ly)`.
pub fn mode_field(n: usize, m: usize, amplitude: f64, grid: &GridSpec) -> Result<ScalarField> {
    if n < 1 || m < 1 {
        return Err(Error::InvalidArgument(format!(
            "mode indices must be >= 1, got ({n}, {m})"
        )));
    }
    let mut spec = ModeSpectrum::zeros(n, m, grid.lx, grid.ly)?;
    spec.set(n, m, amplitude);
    let mut g = *grid;
    g.geometry = Geometry::Cartesian;
    let mut f = synthesize(&spec, &g)?;
    f.grid = *grid;
    Ok(f)
}

/// Exact potential of the single charge mode `amplitude · sin sin`.
pub fn mode_potential(n: usize, m: usize, amplitude: f64, grid: &GridSpec) -> Result<ScalarField> {
    let spec = ModeSpectrum::zeros(n, m, grid.lx, grid.ly)?;
    mode_field(n, m, amplitude / spec.wavenumber_sq(n, m), grid)
}

/// Bound on `|φ/R|` from the fundamental mode, scaled by `alpha`:
/// `alpha / ((π²/4)² (1/Lx² + 1/Ly²))`.
pub fn normalization_ratio(lx: f64, ly: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if !(lx > 0.0 && ly > 0.0) {
        return Err(Error::InvalidArgument("domain lengths must be positive".into()));
    }
    let c = PI * PI / 4.0;
    Ok(alpha / (c * c * (1.0 / (lx * lx) + 1.0 / (ly * ly))))
}

/// Multiplier applied to a network trained at spacing `delta_nn` when it is
/// run at spacing `delta_sim`: `(Δ_sim/Δ_NN)²`.
pub fn resolution_ratio(delta_sim: f64, delta_nn: f64) -> Result<f64> {
    if !(delta_sim > 0.0 && delta_nn > 0.0) {
        return Err(Error::InvalidArgument("spacings must be positive".into()));
    }
    let r = delta_sim / delta_nn;
    Ok(r * r)
}
