//! Electron plasma oscillation: 2D Euler equations for the electron fluid
//! with the electric force as a source, over a fixed ion background.
//!
//! Conservative variables are the mass density `ρ = m_e n`, the momentum
//! `(ρu, ρv)` and the total energy `ρE`, closed by an ideal gas. Time
//! integration is the two-step (Richtmyer) Lax-Wendroff scheme in cell-vertex
//! form: a predictor on the dual cells, a corrector on the nodes. Walls are
//! reflective through mirror ghost nodes.

use std::f64::consts::PI;
use std::fmt::Write as _;

use plasmanet_core::consts::{BOLTZMANN, ELECTRON_MASS, ELEMENTARY_CHARGE, EPSILON_0};
use plasmanet_core::field::{gradient_to_efield, trapezoid_weights};
use plasmanet_core::{Geometry, GridSpec, ScalarField, VectorField};

use crate::backend::{PoissonBackend, PoissonSolver};
use crate::{Result, SimError};

pub const GAMMA: f64 = 5.0 / 3.0;

/// `(ω_p, T_p)` for the background density `n0`.
pub fn plasma_frequency(n0: f64) -> Result<(f64, f64)> {
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(SimError::Config(format!("density must be positive, got {n0}")));
    }
    let w = (n0 * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (ELECTRON_MASS * EPSILON_0)).sqrt();
    Ok((w, 2.0 * PI / w))
}

#[derive(Debug, Clone)]
pub struct PlasmaState {
    pub grid: GridSpec,
    pub rho: Vec<f64>,
    pub mx: Vec<f64>,
    pub my: Vec<f64>,
    pub energy: Vec<f64>,
    /// Ion density, constant in time [m⁻³].
    pub n0: f64,
    pub gamma: f64,
    pub t: f64,
}

impl PlasmaState {
    /// Electrons at rest with density `n0` and temperature `t0`.
    pub fn uniform(grid: GridSpec, n0: f64, t0: f64) -> Result<Self> {
        let n = ScalarField::from_fn(grid, |_, _| n0);
        Self::at_rest(&n, n0, t0)
    }

    /// Electrons at rest with density `n` and uniform temperature `t0`.
    pub fn at_rest(n: &ScalarField, n0: f64, t0: f64) -> Result<Self> {
        if n.grid.geometry != Geometry::Cartesian {
            return Err(SimError::Config("the oscillation solver needs a Cartesian grid".into()));
        }
        if !(n0 > 0.0) || !(t0 > 0.0) {
            return Err(SimError::Config(format!("need n0 > 0 and T0 > 0, got {n0}, {t0}")));
        }
        if let Some((k, v)) = n.values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(SimError::NegativeDensity { index: k, value: *v });
        }
        let len = n.grid.len();
        Ok(Self {
            grid: n.grid,
            rho: n.values.iter().map(|v| v * ELECTRON_MASS).collect(),
            mx: vec![0.0; len],
            my: vec![0.0; len],
            energy: n.values.iter().map(|v| v * BOLTZMANN * t0 / (GAMMA - 1.0)).collect(),
            n0,
            gamma: GAMMA,
            t: 0.0,
        })
    }

    pub fn electron_density(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.rho.iter().map(|r| r / ELECTRON_MASS).collect(),
        }
    }

    /// `n_e − n₀`.
    pub fn perturbation(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.rho.iter().map(|r| r / ELECTRON_MASS - self.n0).collect(),
        }
    }

    pub fn pressure(&self, k: usize) -> f64 {
        pressure(self.gamma, self.rho[k], self.mx[k], self.my[k], self.energy[k])
    }

    pub fn sound_speed(&self, k: usize) -> f64 {
        (self.gamma * self.pressure(k).max(0.0) / self.rho[k]).sqrt()
    }

    /// Largest explicit step allowed by the acoustic CFL condition.
    pub fn cfl_limit(&self) -> f64 {
        let (dx, dy) = (self.grid.dx(), self.grid.dy());
        let mut worst: f64 = 0.0;
        for k in 0..self.grid.len() {
            let c = self.sound_speed(k);
            let (u, v) = (self.mx[k] / self.rho[k], self.my[k] / self.rho[k]);
            worst = worst.max((u.abs() + c) / dx + (v.abs() + c) / dy);
        }
        if worst > 0.0 {
            1.0 / worst
        } else {
            f64::INFINITY
        }
    }

    /// Trapezoid-weighted electron mass per unit depth [kg/m].
    pub fn total_mass(&self) -> f64 {
        let wx = trapezoid_weights(self.grid.nx, self.grid.dx());
        let wy = trapezoid_weights(self.grid.ny, self.grid.dy());
        let mut m = 0.0;
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                m += wx[i] * wy[j] * self.rho[self.grid.idx(i, j)];
            }
        }
        m
    }

    /// `R = e(n₀ − n_e)/ε₀`.
    pub fn poisson_rhs(&self) -> ScalarField {
        charge_rhs(&self.electron_density(), self.n0)
    }
}

pub fn charge_rhs(ne: &ScalarField, n0: f64) -> ScalarField {
    ScalarField {
        grid: ne.grid,
        values: ne
            .values
            .iter()
            .map(|n| ELEMENTARY_CHARGE * (n0 - n) / EPSILON_0)
            .collect(),
    }
}

fn pressure(gamma: f64, rho: f64, mx: f64, my: f64, en: f64) -> f64 {
    (gamma - 1.0) * (en - 0.5 * (mx * mx + my * my) / rho)
}

/// Electrons at rest, `n₀` plus two Gaussian bumps of peak `ne_amp`.
/// Centres and standard deviations are in metres.
pub fn init_two_gaussians(
    grid: GridSpec,
    n0: f64,
    ne_amp: f64,
    centers: [(f64, f64); 2],
    sigmas: [(f64, f64); 2],
    t0: f64,
) -> Result<PlasmaState> {
    if !(n0 > 0.0) {
        return Err(SimError::Config(format!("n0 must be positive, got {n0}")));
    }
    let ratio = ne_amp.abs() / n0;
    if !(ratio < 1e-3) {
        return Err(SimError::Config(format!(
            "perturbation amplitude must stay below 1e-3 n0, got ratio {ratio:e}"
        )));
    }
    if sigmas.iter().any(|(sx, sy)| !(*sx > 0.0 && *sy > 0.0)) {
        return Err(SimError::Config("Gaussian widths must be positive".into()));
    }
    let n = ScalarField::from_fn(grid, |x, y| {
        let bump: f64 = centers
            .iter()
            .zip(&sigmas)
            .map(|((cx, cy), (sx, sy))| {
                let (u, v) = ((x - cx) / sx, (y - cy) / sy);
                (-0.5 * (u * u + v * v)).exp()
            })
            .sum();
        n0 + ne_amp * bump
    });
    PlasmaState::at_rest(&n, n0, t0)
}

/// Node arrays with one layer of mirror ghosts, `(nx + 2) × (ny + 2)`.
struct Padded {
    w: usize,
    h: usize,
}

impl Padded {
    fn new(grid: &GridSpec) -> Self {
        Self {
            w: grid.nx + 2,
            h: grid.ny + 2,
        }
    }

    fn len(&self) -> usize {
        self.w * self.h
    }

    /// Copies `v` into the interior and mirrors it across every wall, with
    /// the given sign for the ghost values across x and y walls.
    fn fill(&self, v: &[f64], sx: f64, sy: f64) -> Vec<f64> {
        let (w, h) = (self.w, self.h);
        let nx = w - 2;
        let mut p = vec![0.0; self.len()];
        for j in 0..h - 2 {
            p[(j + 1) * w + 1..(j + 1) * w + 1 + nx].copy_from_slice(&v[j * nx..(j + 1) * nx]);
        }
        for b in 1..h - 1 {
            p[b * w] = sx * p[b * w + 2];
            p[b * w + w - 1] = sx * p[b * w + w - 3];
        }
        for a in 0..w {
            p[a] = sy * p[2 * w + a];
            p[(h - 1) * w + a] = sy * p[(h - 3) * w + a];
        }
        p
    }
}

struct Conserved {
    rho: Vec<f64>,
    mx: Vec<f64>,
    my: Vec<f64>,
    en: Vec<f64>,
}

impl Conserved {
    fn fluxes(&self, gamma: f64) -> ([Vec<f64>; 4], [Vec<f64>; 4]) {
        let n = self.rho.len();
        let mut f: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
        let mut g: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
        for k in 0..n {
            let (r, mx, my, en) = (self.rho[k], self.mx[k], self.my[k], self.en[k]);
            let p = pressure(gamma, r, mx, my, en);
            let (u, v) = (mx / r, my / r);
            f[0][k] = mx;
            f[1][k] = mx * u + p;
            f[2][k] = my * u;
            f[3][k] = (en + p) * u;
            g[0][k] = my;
            g[1][k] = mx * v;
            g[2][k] = my * v + p;
            g[3][k] = (en + p) * v;
        }
        (f, g)
    }

    /// Electric force and its work, `(0, q n E, q n E·u)` with `q = −e`.
    fn sources(&self, ex: &[f64], ey: &[f64]) -> [Vec<f64>; 3] {
        let c = -ELEMENTARY_CHARGE / ELECTRON_MASS;
        let n = self.rho.len();
        let mut s: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; n]);
        for k in 0..n {
            s[0][k] = c * self.rho[k] * ex[k];
            s[1][k] = c * self.rho[k] * ey[k];
            s[2][k] = c * (ex[k] * self.mx[k] + ey[k] * self.my[k]);
        }
        s
    }
}

/// One step with the field `e` frozen over both stages.
pub fn step_lax_wendroff(state: &PlasmaState, e: &VectorField, dt: f64) -> Result<PlasmaState> {
    lax_wendroff(state, e, dt, None)
}

/// One step where the corrector source uses the field of the predicted
/// half-step density, as returned by `field(n_e)`.
pub fn step_lax_wendroff_coupled(
    state: &PlasmaState,
    e: &VectorField,
    dt: f64,
    field: &mut dyn FnMut(&ScalarField) -> Result<VectorField>,
) -> Result<PlasmaState> {
    lax_wendroff(state, e, dt, Some(field))
}

type FieldFn<'a> = &'a mut dyn FnMut(&ScalarField) -> Result<VectorField>;

fn lax_wendroff(state: &PlasmaState, e: &VectorField, dt: f64, field: Option<FieldFn<'_>>) -> Result<PlasmaState> {
    let grid = state.grid;
    if e.grid != grid {
        return Err(SimError::Config("electric field grid differs from the state grid".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::Config(format!("time step must be positive, got {dt}")));
    }
    let limit = state.cfl_limit();
    if dt > limit {
        return Err(SimError::Cfl { dt, limit });
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let (dx, dy) = (grid.dx(), grid.dy());
    let gamma = state.gamma;
    let pad = Padded::new(&grid);
    let w = pad.w;

    let u = Conserved {
        rho: pad.fill(&state.rho, 1.0, 1.0),
        mx: pad.fill(&state.mx, -1.0, 1.0),
        my: pad.fill(&state.my, 1.0, -1.0),
        en: pad.fill(&state.energy, 1.0, 1.0),
    };
    // The wall-normal force does no work on a pinned wall node; dropping it
    // keeps the ghost-cell mass flux antisymmetric, so mass is conserved.
    let mut pex = pad.fill(&e.x, -1.0, 1.0);
    let mut pey = pad.fill(&e.y, 1.0, -1.0);
    for b in 0..pad.h {
        pex[b * w + 1] = 0.0;
        pex[b * w + w - 2] = 0.0;
    }
    for a in 0..w {
        pey[w + a] = 0.0;
        pey[(pad.h - 2) * w + a] = 0.0;
    }
    let (f, g) = u.fluxes(gamma);
    let s = u.sources(&pex, &pey);
    let uvec = [&u.rho, &u.mx, &u.my, &u.en];

    // Predictor on the (w − 1) × (h − 1) dual cells.
    let (cw, ch) = (w - 1, pad.h - 1);
    let mut half: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; cw * ch]);
    for b in 0..ch {
        for a in 0..cw {
            let (k00, k10, k01, k11) = (b * w + a, b * w + a + 1, (b + 1) * w + a, (b + 1) * w + a + 1);
            let c = b * cw + a;
            for q in 0..4 {
                let avg = 0.25 * (uvec[q][k00] + uvec[q][k10] + uvec[q][k01] + uvec[q][k11]);
                let dfx = (f[q][k10] + f[q][k11] - f[q][k00] - f[q][k01]) / (2.0 * dx);
                let dgy = (g[q][k01] + g[q][k11] - g[q][k00] - g[q][k10]) / (2.0 * dy);
                let src = if q == 0 {
                    0.0
                } else {
                    0.25 * (s[q - 1][k00] + s[q - 1][k10] + s[q - 1][k01] + s[q - 1][k11])
                };
                half[q][c] = avg - 0.5 * dt * (dfx + dgy) + 0.5 * dt * src;
            }
        }
    }
    let half = Conserved {
        rho: std::mem::take(&mut half[0]),
        mx: std::mem::take(&mut half[1]),
        my: std::mem::take(&mut half[2]),
        en: std::mem::take(&mut half[3]),
    };
    if let Some(k) = half.rho.iter().position(|r| !(*r > 0.0)) {
        return Err(SimError::NegativeDensity { index: k, value: half.rho[k] });
    }
    let (hf, hg) = half.fluxes(gamma);

    // Half-step state on the real nodes, for the corrector source.
    let len = grid.len();
    let mut node_half = Conserved {
        rho: vec![0.0; len],
        mx: vec![0.0; len],
        my: vec![0.0; len],
        en: vec![0.0; len],
    };
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            let cells = [j * cw + i, j * cw + i + 1, (j + 1) * cw + i, (j + 1) * cw + i + 1];
            let avg = |v: &[f64]| 0.25 * cells.iter().map(|c| v[*c]).sum::<f64>();
            node_half.rho[k] = avg(&half.rho);
            node_half.mx[k] = avg(&half.mx);
            node_half.my[k] = avg(&half.my);
            node_half.en[k] = avg(&half.en);
        }
    }
    let e_half = match field {
        Some(solve) => {
            let ne = ScalarField {
                grid,
                values: node_half.rho.iter().map(|r| r / ELECTRON_MASS).collect(),
            };
            let eh = solve(&ne)?;
            if eh.grid != grid {
                return Err(SimError::Config("half-step field grid differs from the state grid".into()));
            }
            eh
        }
        None => e.clone(),
    };
    let sh = node_half.sources(&e_half.x, &e_half.y);

    // Corrector on the nodes.
    let old = [&state.rho, &state.mx, &state.my, &state.energy];
    let mut new: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; len]);
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            let (c00, c10, c01, c11) = (j * cw + i, j * cw + i + 1, (j + 1) * cw + i, (j + 1) * cw + i + 1);
            for q in 0..4 {
                let dfx = (hf[q][c10] + hf[q][c11] - hf[q][c00] - hf[q][c01]) / (2.0 * dx);
                let dgy = (hg[q][c01] + hg[q][c11] - hg[q][c00] - hg[q][c10]) / (2.0 * dy);
                let src = if q == 0 { 0.0 } else { sh[q - 1][k] };
                new[q][k] = old[q][k] - dt * (dfx + dgy) + dt * src;
            }
        }
    }
    let [rho, mut mx, mut my, energy] = new;
    for j in 0..ny {
        mx[grid.idx(0, j)] = 0.0;
        mx[grid.idx(nx - 1, j)] = 0.0;
    }
    for i in 0..nx {
        my[grid.idx(i, 0)] = 0.0;
        my[grid.idx(i, ny - 1)] = 0.0;
    }
    for k in 0..len {
        if !(rho[k].is_finite() && mx[k].is_finite() && my[k].is_finite() && energy[k].is_finite()) {
            return Err(SimError::Blowup(k));
        }
        if rho[k] <= 0.0 {
            return Err(SimError::NegativeDensity { index: k, value: rho[k] / ELECTRON_MASS });
        }
    }
    Ok(PlasmaState {
        grid,
        rho,
        mx,
        my,
        energy,
        n0: state.n0,
        gamma,
        t: state.t + dt,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationConfig {
    pub grid: GridSpec,
    pub n0: f64,
    pub amplitude: f64,
    /// Bump centres as fractions of the domain lengths.
    pub centers: [(f64, f64); 2],
    /// Bump standard deviation as a fraction of the domain lengths.
    pub sigma: f64,
    pub t0: f64,
    pub periods: f64,
    /// Fixed step; `None` picks `min(cfl · limit, T_p / steps_per_period)`.
    pub dt: Option<f64>,
    pub cfl: f64,
    pub steps_per_period: usize,
    /// Probe nodes: initial `|n_e − n₀|` above this fraction of its maximum.
    pub probe_fraction: f64,
    pub snapshot_times: Vec<f64>,
}

impl Default for OscillationConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::square(61, 0.01).expect("valid default grid"),
            n0: 1e16,
            amplitude: 1e11,
            centers: [(0.35, 0.5), (0.65, 0.5)],
            sigma: 0.1,
            t0: 300.0,
            periods: 2.0,
            dt: None,
            cfl: 0.4,
            steps_per_period: 200,
            probe_fraction: 0.1,
            snapshot_times: Vec::new(),
        }
    }
}

impl OscillationConfig {
    pub fn initial_state(&self) -> Result<PlasmaState> {
        let g = self.grid;
        let c = self.centers.map(|(x, y)| (x * g.lx, y * g.ly));
        let s = (self.sigma * g.lx, self.sigma * g.ly);
        init_two_gaussians(g, self.n0, self.amplitude, c, [s, s], self.t0)
    }

    pub fn time_step(&self, state: &PlasmaState) -> Result<f64> {
        let (_, tp) = plasma_frequency(self.n0)?;
        let dt = match self.dt {
            Some(dt) => dt,
            None => {
                if self.steps_per_period == 0 || !(self.cfl > 0.0 && self.cfl <= 1.0) {
                    return Err(SimError::Config("need steps_per_period > 0 and cfl in (0, 1]".into()));
                }
                (self.cfl * state.cfl_limit()).min(tp / self.steps_per_period as f64)
            }
        };
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::Config(format!("time step must be positive, got {dt}")));
        }
        Ok(dt)
    }
}

#[derive(Debug, Clone)]
pub struct OscillationDiagnostics {
    pub times: Vec<f64>,
    /// Mean of `n_e − n₀` over the probe nodes.
    pub mean_probe: Vec<f64>,
    /// Maximum of `|n_e − n₀|` over the domain.
    pub max_probe: Vec<f64>,
    pub snapshots: Vec<(f64, ScalarField)>,
    pub probe: Vec<usize>,
    pub dt: f64,
    pub final_state: PlasmaState,
}

impl OscillationDiagnostics {
    pub const CSV_HEADER: &'static str = "t,mean_probe,max_probe";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for k in 0..self.times.len() {
            let _ = writeln!(s, "{:e},{:e},{:e}", self.times[k], self.mean_probe[k], self.max_probe[k]);
        }
        s
    }

    /// Peak `|mean_probe|` in each consecutive half-period window.
    pub fn envelope(&self, period: f64) -> Vec<f64> {
        let mut peaks: Vec<f64> = Vec::new();
        for (t, v) in self.times.iter().zip(&self.mean_probe) {
            let w = (t / (0.5 * period)).floor() as usize;
            if peaks.len() <= w {
                peaks.resize(w + 1, 0.0);
            }
            peaks[w] = peaks[w].max(v.abs());
        }
        // A trailing window shorter than a half period need not hold a peak.
        let last = *self.times.last().unwrap_or(&0.0);
        if peaks.len() > 1 && last < peaks.len() as f64 * 0.5 * period - 0.25 * period {
            peaks.pop();
        }
        peaks
    }

    /// Largest relative departure of the envelope from the initial amplitude.
    pub fn envelope_drift(&self, period: f64) -> f64 {
        let a0 = self.mean_probe.first().map(|v| v.abs()).unwrap_or(0.0);
        if a0 == 0.0 {
            return 0.0;
        }
        self.envelope(period)
            .iter()
            .map(|p| (p / a0 - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `max |mean_probe| / |mean_probe(0)|`.
    pub fn amplitude_ratio(&self) -> f64 {
        let a0 = self.mean_probe.first().map(|v| v.abs()).unwrap_or(0.0);
        let m = self.mean_probe.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if a0 == 0.0 {
            if m == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            m / a0
        }
    }
}

pub fn probe_nodes(state: &PlasmaState, fraction: f64) -> Vec<usize> {
    let p = state.perturbation();
    let m = p.max_abs();
    if m == 0.0 {
        return (0..p.values.len()).collect();
    }
    (0..p.values.len()).filter(|k| p.values[*k].abs() > fraction * m).collect()
}

pub fn run(config: &OscillationConfig, backend: PoissonBackend) -> Result<OscillationDiagnostics> {
    let mut solver = PoissonSolver::new(backend, config.grid)?;
    run_with(config, &mut solver, |_, _| {})
}

/// Runs the coupled loop, calling `on_step(state, E)` after every field solve
/// at the start of a step.
pub fn run_with(
    config: &OscillationConfig,
    solver: &mut PoissonSolver,
    mut on_step: impl FnMut(&PlasmaState, &VectorField),
) -> Result<OscillationDiagnostics> {
    if !(config.periods > 0.0) {
        return Err(SimError::Config("periods must be positive".into()));
    }
    let mut state = config.initial_state()?;
    let dt = config.time_step(&state)?;
    let (_, tp) = plasma_frequency(config.n0)?;
    let steps = (config.periods * tp / dt).ceil() as usize;
    let probe = probe_nodes(&state, config.probe_fraction);
    let n0 = config.n0;

    let mut field = |ne: &ScalarField| -> Result<VectorField> {
        let phi = solver.solve(&charge_rhs(ne, n0))?;
        Ok(gradient_to_efield(&phi))
    };

    let mut diag = OscillationDiagnostics {
        times: Vec::with_capacity(steps + 1),
        mean_probe: Vec::with_capacity(steps + 1),
        max_probe: Vec::with_capacity(steps + 1),
        snapshots: Vec::new(),
        probe,
        dt,
        final_state: state.clone(),
    };
    let mut pending: Vec<f64> = config.snapshot_times.clone();
    pending.sort_by(f64::total_cmp);
    let record = |state: &PlasmaState, diag: &mut OscillationDiagnostics, pending: &mut Vec<f64>| {
        let p = state.perturbation();
        let mean = diag.probe.iter().map(|k| p.values[*k]).sum::<f64>() / diag.probe.len().max(1) as f64;
        diag.times.push(state.t);
        diag.mean_probe.push(mean);
        diag.max_probe.push(p.max_abs());
        while pending.first().is_some_and(|t| *t <= state.t + 0.5 * dt) {
            let t = pending.remove(0);
            diag.snapshots.push((t, p.clone()));
        }
    };
    record(&state, &mut diag, &mut pending);
    let mut e = field(&state.electron_density()).map_err(|e| e.at_step(0))?;
    for step in 0..steps {
        on_step(&state, &e);
        state = step_lax_wendroff_coupled(&state, &e, dt, &mut field).map_err(|e| e.at_step(step))?;
        e = field(&state.electron_density()).map_err(|e| e.at_step(step + 1))?;
        record(&state, &mut diag, &mut pending);
    }
    diag.final_state = state;
    Ok(diag)
}

/// Period from the zero crossings of `series`, located by linear
/// interpolation between samples.
pub fn measure_period(times: &[f64], series: &[f64]) -> Result<f64> {
    if times.len() != series.len() {
        return Err(SimError::Config("time and value series differ in length".into()));
    }
    let mut crossings = Vec::new();
    for k in 1..series.len() {
        let (a, b) = (series[k - 1], series[k]);
        if a == 0.0 && k == 1 {
            crossings.push(times[0]);
        }
        if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
            let s = a / (a - b);
            crossings.push(times[k - 1] + s * (times[k] - times[k - 1]));
        }
    }
    if crossings.len() < 3 {
        return Err(SimError::Config(format!(
            "need at least 3 zero crossings to measure a period, found {}",
            crossings.len()
        )));
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    Ok(2.0 * span / (crossings.len() - 1) as f64)
}
