//! Axisymmetric double-headed streamer: electrons drift and diffuse, ions
//! are frozen, and all three species exchange particles through ionization,
//! attachment and recombination driven by the local field.
//!
//! Transport is a finite-volume scheme on the nodal control volumes of the
//! `(x, r)` grid: first-order upwind drift, central diffusion, explicit
//! Euler in time. Boundary faces at `x = 0`, `x = Lx` and `r = Lr` are open
//! (zero-gradient), the axis carries no flux.

use std::f64::consts::PI;
use std::fmt::Write as _;

use plasmanet_core::consts::{ELEMENTARY_CHARGE, EPSILON_0};
use plasmanet_core::field::gradient_to_efield;
use plasmanet_core::{Geometry, GridSpec, ScalarField, VectorField};

use crate::backend::{PoissonBackend, PoissonSolver};
use crate::{Result, SimError};

/// Transport and reaction coefficients sampled against the reduced field
/// `E/N` [V·m²]. Reduced quantities are stored per neutral: `μN`, `α/N`,
/// `η/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChemistryTable {
    pub e_over_n: Vec<f64>,
    /// `μ_e N` [1/(V·m·s)].
    pub mobility_n: Vec<f64>,
    /// `D_e` [m²/s].
    pub diffusion: Vec<f64>,
    /// `α/N` [m²].
    pub alpha_n: Vec<f64>,
    /// `η/N` [m²].
    pub eta_n: Vec<f64>,
    /// Recombination rate [m³/s].
    pub beta: f64,
    /// Neutral gas density [m⁻³].
    pub neutral_density: f64,
}

/// Neutral density of air at 300 K and 1 atm [m⁻³].
pub const AIR_DENSITY: f64 = 2.45e25;

impl ChemistryTable {
    /// Simplified air: two-piece Townsend ionization `α/N = A exp(−B N/E)`
    /// (`A = 2.0e-20 m²`, `B = 7.248e-19 V·m²` above `E/N = 1.5e-19 V·m²`;
    /// `A = 6.619e-21 m²`, `B = 5.593e-19 V·m²` below), constant mobility,
    /// diffusion and attachment.
    pub fn air() -> Self {
        let n = AIR_DENSITY;
        let samples = 241;
        let (lo, hi) = (1e-22_f64.ln(), 1e-17_f64.ln());
        let e_over_n: Vec<f64> = (0..samples)
            .map(|k| (lo + (hi - lo) * k as f64 / (samples - 1) as f64).exp())
            .collect();
        let townsend = |en: f64| {
            if en > 1.5e-19 {
                2.0e-20 * (-7.248e-19 / en).exp()
            } else {
                6.619e-21 * (-5.593e-19 / en).exp()
            }
        };
        Self {
            alpha_n: e_over_n.iter().map(|en| townsend(*en)).collect(),
            mobility_n: vec![0.042 * n; samples],
            diffusion: vec![0.1; samples],
            eta_n: vec![100.0 / n; samples],
            e_over_n,
            beta: 2e-13,
            neutral_density: n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.e_over_n.len();
        if m < 2 {
            return Err(SimError::Config("chemistry table needs at least two samples".into()));
        }
        for (name, v) in [
            ("mobility", &self.mobility_n),
            ("diffusion", &self.diffusion),
            ("alpha", &self.alpha_n),
            ("eta", &self.eta_n),
        ] {
            if v.len() != m {
                return Err(SimError::Config(format!("{name} column has {} samples, expected {m}", v.len())));
            }
            if v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(SimError::Config(format!("{name} column must be finite and non-negative")));
            }
        }
        if self.e_over_n[0] <= 0.0 || self.e_over_n.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SimError::Config("E/N samples must be positive and increasing".into()));
        }
        if self.alpha_n.windows(2).any(|w| w[1] < w[0]) {
            return Err(SimError::Config("alpha must be non-decreasing in E/N".into()));
        }
        if !(self.beta >= 0.0) || !(self.neutral_density > 0.0) {
            return Err(SimError::Config("need beta >= 0 and N > 0".into()));
        }
        Ok(())
    }
}

impl Default for ChemistryTable {
    fn default() -> Self {
        Self::air()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    /// `|W_e| = μ_e E` [m/s].
    pub drift: f64,
    pub mobility: f64,
    pub diffusion: f64,
    pub alpha: f64,
    pub eta: f64,
    /// `E/N` fell outside the table and was clamped to an end point.
    pub clamped: bool,
}

/// Coefficients at field magnitude `e_norm`, linear in `ln(E/N)` between
/// samples.
pub fn rates(e_norm: f64, chem: &ChemistryTable) -> Result<Rates> {
    if !(e_norm >= 0.0 && e_norm.is_finite()) {
        return Err(SimError::Config(format!("field magnitude must be finite and >= 0, got {e_norm}")));
    }
    let n = chem.neutral_density;
    let en = e_norm / n;
    let x = &chem.e_over_n;
    let last = x.len() - 1;
    let (k, s, clamped) = if en <= x[0] {
        (0, 0.0, en < x[0])
    } else if en >= x[last] {
        (last - 1, 1.0, en > x[last])
    } else {
        let k = x.partition_point(|v| *v <= en) - 1;
        let s = (en.ln() - x[k].ln()) / (x[k + 1].ln() - x[k].ln());
        (k, s, false)
    };
    let lerp = |v: &[f64]| v[k] + s * (v[k + 1] - v[k]);
    let mobility = lerp(&chem.mobility_n) / n;
    Ok(Rates {
        drift: mobility * e_norm,
        mobility,
        diffusion: lerp(&chem.diffusion),
        alpha: lerp(&chem.alpha_n) * n,
        eta: lerp(&chem.eta_n) * n,
        clamped,
    })
}

#[derive(Debug, Clone)]
pub struct StreamerState {
    pub grid: GridSpec,
    pub ne: Vec<f64>,
    pub np: Vec<f64>,
    pub nn: Vec<f64>,
    pub t: f64,
    /// Accumulated discharge energy [J].
    pub energy: f64,
}

impl StreamerState {
    pub fn field(&self, values: &[f64]) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: values.to_vec(),
        }
    }

    /// `Σ V n` for one species.
    pub fn particles(&self, values: &[f64]) -> f64 {
        node_volumes(&self.grid).iter().zip(values).map(|(v, n)| v * n).sum()
    }
}

fn require_axisymmetric(grid: &GridSpec) -> Result<()> {
    if grid.geometry != Geometry::Axisymmetric {
        return Err(SimError::Config("the streamer solver needs an axisymmetric grid".into()));
    }
    Ok(())
}

/// `∫ r dr` over the radial extent of each node row.
fn row_measure(grid: &GridSpec) -> Vec<f64> {
    let dr = grid.dy();
    (0..grid.ny)
        .map(|j| {
            if j == 0 {
                dr * dr / 8.0
            } else if j == grid.ny - 1 {
                (grid.ly * grid.ly - (grid.ly - 0.5 * dr).powi(2)) / 2.0
            } else {
                j as f64 * dr * dr
            }
        })
        .collect()
}

fn column_width(grid: &GridSpec) -> Vec<f64> {
    let dx = grid.dx();
    (0..grid.nx)
        .map(|i| if i == 0 || i == grid.nx - 1 { 0.5 * dx } else { dx })
        .collect()
}

/// Volumes `2π ∫∫ r dr dx` of the nodal control volumes [m³].
pub fn node_volumes(grid: &GridSpec) -> Vec<f64> {
    let ay = row_measure(grid);
    let hx = column_width(grid);
    let mut v = vec![0.0; grid.len()];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            v[grid.idx(i, j)] = 2.0 * PI * hx[i] * ay[j];
        }
    }
    v
}

/// Neutral seed `n_e = n_p = n₀ exp(−((x−x₀)/σ_x)² − (r/σ_r)²) + n_back`.
pub fn init_streamer(
    grid: GridSpec,
    n0: f64,
    n_back: f64,
    x0: f64,
    sigma_x: f64,
    sigma_r: f64,
) -> Result<StreamerState> {
    require_axisymmetric(&grid)?;
    if !(x0 > 0.0 && x0 < grid.lx) {
        return Err(SimError::Config(format!("seed position {x0} lies outside (0, {})", grid.lx)));
    }
    if !(n0 >= 0.0 && n_back >= 0.0 && sigma_x > 0.0 && sigma_r > 0.0) {
        return Err(SimError::Config("seed densities must be >= 0 and widths > 0".into()));
    }
    let ne = ScalarField::from_fn(grid, |x, r| {
        n0 * (-((x - x0) / sigma_x).powi(2) - (r / sigma_r).powi(2)).exp() + n_back
    })
    .values;
    Ok(StreamerState {
        grid,
        np: ne.clone(),
        nn: vec![0.0; ne.len()],
        ne,
        t: 0.0,
        energy: 0.0,
    })
}

/// `R = e(n_p − n_e − n_n)/ε₀`.
pub fn poisson_rhs(state: &StreamerState) -> ScalarField {
    let c = ELEMENTARY_CHARGE / EPSILON_0;
    ScalarField {
        grid: state.grid,
        values: (0..state.ne.len())
            .map(|k| c * (state.np[k] - state.ne[k] - state.nn[k]))
            .collect(),
    }
}

/// `E = −∇φ + E_x e_x` for a potential solved with zero boundary data.
pub fn total_field(phi: &ScalarField, ex: f64) -> VectorField {
    let mut e = gradient_to_efield(phi);
    e.x.iter_mut().for_each(|v| *v += ex);
    e
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    /// Particles removed by flooring negative densities.
    pub floored: f64,
    /// Nodes whose `E/N` was clamped to the table range.
    pub clamped: usize,
    /// Smallest of the advective, diffusive and dielectric-relaxation limits.
    pub dt_limit: f64,
}

impl StepReport {
    pub fn dt_exceeded(&self, dt: f64) -> bool {
        dt > self.dt_limit
    }
}

/// Per-node rates and the vector drift velocity `W_e = −μ_e E`.
struct NodeRates {
    wx: Vec<f64>,
    wr: Vec<f64>,
    rates: Vec<Rates>,
    clamped: usize,
}

fn node_rates(e: &VectorField, chem: &ChemistryTable) -> Result<NodeRates> {
    let n = e.x.len();
    let mut out = NodeRates {
        wx: vec![0.0; n],
        wr: vec![0.0; n],
        rates: Vec::with_capacity(n),
        clamped: 0,
    };
    for k in 0..n {
        let r = rates(e.norm_at(k), chem)?;
        out.wx[k] = -r.mobility * e.x[k];
        out.wr[k] = -r.mobility * e.y[k];
        out.clamped += r.clamped as usize;
        out.rates.push(r);
    }
    Ok(out)
}

/// One explicit Euler step of the three-species system in the field `e`.
pub fn step(
    state: &StreamerState,
    e: &VectorField,
    chem: &ChemistryTable,
    dt: f64,
) -> Result<(StreamerState, StepReport)> {
    let grid = state.grid;
    require_axisymmetric(&grid)?;
    if e.grid != grid {
        return Err(SimError::Config("electric field grid differs from the state grid".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::Config(format!("time step must be positive, got {dt}")));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let (dx, dr) = (grid.dx(), grid.dy());
    let nr = node_rates(e, chem)?;
    let vol = node_volumes(&grid);
    let ay = row_measure(&grid);
    let hx = column_width(&grid);
    let ne = &state.ne;

    let mut net = vec![0.0; grid.len()];
    // Axial faces.
    for j in 0..ny {
        let area = 2.0 * PI * ay[j];
        for i in 0..nx - 1 {
            let (a, b) = (grid.idx(i, j), grid.idx(i + 1, j));
            let w = 0.5 * (nr.wx[a] + nr.wx[b]);
            let d = 0.5 * (nr.rates[a].diffusion + nr.rates[b].diffusion);
            let up = if w > 0.0 { ne[a] } else { ne[b] };
            let flux = area * (w * up - d * (ne[b] - ne[a]) / dx);
            net[a] -= flux;
            net[b] += flux;
        }
        let (a, b) = (grid.idx(0, j), grid.idx(nx - 1, j));
        net[a] += area * nr.wx[a] * ne[a];
        net[b] -= area * nr.wx[b] * ne[b];
    }
    // Radial faces.
    for j in 0..ny - 1 {
        let rf = (j as f64 + 0.5) * dr;
        for i in 0..nx {
            let area = 2.0 * PI * hx[i] * rf;
            let (a, b) = (grid.idx(i, j), grid.idx(i, j + 1));
            let w = 0.5 * (nr.wr[a] + nr.wr[b]);
            let d = 0.5 * (nr.rates[a].diffusion + nr.rates[b].diffusion);
            let up = if w > 0.0 { ne[a] } else { ne[b] };
            let flux = area * (w * up - d * (ne[b] - ne[a]) / dr);
            net[a] -= flux;
            net[b] += flux;
        }
    }
    for i in 0..nx {
        let b = grid.idx(i, ny - 1);
        net[b] -= 2.0 * PI * hx[i] * grid.ly * nr.wr[b] * ne[b];
    }

    let mut next = StreamerState {
        grid,
        ne: vec![0.0; grid.len()],
        np: vec![0.0; grid.len()],
        nn: vec![0.0; grid.len()],
        t: state.t + dt,
        energy: state.energy,
    };
    let mut report = StepReport {
        clamped: nr.clamped,
        ..Default::default()
    };
    let (mut wmax, mut dmax, mut mumax_ne): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for k in 0..grid.len() {
        let r = &nr.rates[k];
        let (e_, p, n) = (ne[k], state.np[k], state.nn[k]);
        let ion = e_ * r.alpha * r.drift;
        let att = e_ * r.eta * r.drift;
        let rec_e = e_ * p * chem.beta;
        let rec_n = n * p * chem.beta;
        let mut vals = [
            e_ + dt * (net[k] / vol[k] + ion - att - rec_e),
            p + dt * (ion - rec_e - rec_n),
            n + dt * (att - rec_n),
        ];
        for v in vals.iter_mut() {
            if !v.is_finite() {
                return Err(SimError::Blowup(k));
            }
            if *v < 0.0 {
                report.floored += -*v * vol[k];
                *v = 0.0;
            }
        }
        next.ne[k] = vals[0];
        next.np[k] = vals[1];
        next.nn[k] = vals[2];
        wmax = wmax.max(nr.wx[k].abs() / dx + nr.wr[k].abs() / dr);
        dmax = dmax.max(r.diffusion);
        mumax_ne = mumax_ne.max(r.mobility * e_);
    }
    let adv = if wmax > 0.0 { 1.0 / wmax } else { f64::INFINITY };
    let h = dx.min(dr);
    let diff = if dmax > 0.0 { h * h / (4.0 * dmax) } else { f64::INFINITY };
    let diel = if mumax_ne > 0.0 {
        EPSILON_0 / (ELEMENTARY_CHARGE * mumax_ne)
    } else {
        f64::INFINITY
    };
    report.dt_limit = adv.min(diff).min(diel);
    Ok((next, report))
}

/// `dt ∫ e n_e μ_e |E|² dV`.
pub fn discharge_energy_increment(
    state: &StreamerState,
    e: &VectorField,
    chem: &ChemistryTable,
    dt: f64,
) -> Result<f64> {
    if e.grid != state.grid {
        return Err(SimError::Config("electric field grid differs from the state grid".into()));
    }
    let vol = node_volumes(&state.grid);
    let mut total = 0.0;
    for k in 0..vol.len() {
        let en = e.norm_at(k);
        let mu = rates(en, chem)?.mobility;
        total += ELEMENTARY_CHARGE * state.ne[k] * mu * en * en * vol[k];
    }
    Ok(total * dt)
}

/// Axial positions of the `|E|` maxima on the axis, left and right of `x0`.
/// A side whose maximum sits on its ends, or whose profile is flat, reports
/// `x0`.
pub fn front_positions(e: &VectorField, x0: f64) -> (f64, f64) {
    let g = e.grid;
    let mag: Vec<f64> = (0..g.nx).map(|i| e.norm_at(g.idx(i, 0))).collect();
    let left: Vec<usize> = (0..g.nx).filter(|i| g.x(*i) < x0).collect();
    let right: Vec<usize> = (0..g.nx).filter(|i| g.x(*i) > x0).collect();
    let locate = |side: &[usize]| -> f64 {
        if side.len() < 3 {
            return x0;
        }
        let (lo, hi) = (side[0], side[side.len() - 1]);
        let mut best = lo;
        let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in side {
            vmin = vmin.min(mag[*i]);
            if mag[*i] > vmax {
                vmax = mag[*i];
                best = *i;
            }
        }
        if best == lo || best == hi || vmax - vmin <= 1e-9 * vmax.abs() {
            return x0;
        }
        let (a, b, c) = (mag[best - 1], mag[best], mag[best + 1]);
        let den = a - 2.0 * b + c;
        let off = if den < 0.0 { 0.5 * (a - c) / den } else { 0.0 };
        g.x(best) + off * g.dx()
    };
    (locate(&left), locate(&right))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamerConfig {
    pub grid: GridSpec,
    pub n0: f64,
    pub n_back: f64,
    pub x0: f64,
    pub sigma_x: f64,
    pub sigma_r: f64,
    /// Applied axial field [V/m].
    pub ex: f64,
    pub dt: f64,
    pub steps: usize,
    pub sample_every: usize,
    pub snapshot_steps: Vec<usize>,
    pub chemistry: ChemistryTable,
}

impl Default for StreamerConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::axisymmetric(401, 101, 4e-3, 1e-3).expect("valid default grid"),
            n0: 1e19,
            n_back: 1e14,
            x0: 2e-3,
            sigma_x: 1e-4,
            sigma_r: 1e-4,
            ex: 4.8e6,
            dt: 1e-12,
            steps: 1000,
            sample_every: 10,
            snapshot_steps: Vec::new(),
            chemistry: ChemistryTable::air(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamerRow {
    pub t: f64,
    pub x_neg: f64,
    pub x_pos: f64,
    pub energy: f64,
    pub max_e: f64,
    pub max_ne: f64,
}

#[derive(Debug, Clone)]
pub struct StreamerSnapshot {
    pub step: usize,
    pub t: f64,
    pub ne: ScalarField,
    pub np: ScalarField,
    pub nn: ScalarField,
    pub e_norm: ScalarField,
}

#[derive(Debug, Clone)]
pub struct StreamerDiagnostics {
    pub rows: Vec<StreamerRow>,
    pub snapshots: Vec<StreamerSnapshot>,
    pub floored: f64,
    pub clamped: usize,
    /// Steps where `dt` exceeded the explicit stability estimate.
    pub dt_warnings: usize,
    pub min_density: f64,
    pub final_state: StreamerState,
}

impl StreamerDiagnostics {
    pub const CSV_HEADER: &'static str = "t,x_neg,x_pos,Ed,max_E,max_ne";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{:e},{:e},{:e}",
                r.t, r.x_neg, r.x_pos, r.energy, r.max_e, r.max_ne
            );
        }
        s
    }
}

pub fn run(config: &StreamerConfig, backend: PoissonBackend) -> Result<StreamerDiagnostics> {
    let mut solver = PoissonSolver::new(backend, config.grid)?;
    run_with(config, &mut solver)
}

pub fn run_with(config: &StreamerConfig, solver: &mut PoissonSolver) -> Result<StreamerDiagnostics> {
    config.chemistry.validate()?;
    if config.sample_every == 0 {
        return Err(SimError::Config("sample_every must be positive".into()));
    }
    let mut state = init_streamer(
        config.grid,
        config.n0,
        config.n_back,
        config.x0,
        config.sigma_x,
        config.sigma_r,
    )?;
    let mut diag = StreamerDiagnostics {
        rows: Vec::new(),
        snapshots: Vec::new(),
        floored: 0.0,
        clamped: 0,
        dt_warnings: 0,
        min_density: f64::INFINITY,
        final_state: state.clone(),
    };
    let field = |state: &StreamerState, solver: &mut PoissonSolver| -> Result<VectorField> {
        let phi = solver.solve(&poisson_rhs(state))?;
        Ok(total_field(&phi, config.ex))
    };
    let record = |state: &StreamerState, e: &VectorField, diag: &mut StreamerDiagnostics| {
        let (x_neg, x_pos) = front_positions(e, config.x0);
        diag.rows.push(StreamerRow {
            t: state.t,
            x_neg,
            x_pos,
            energy: state.energy,
            max_e: e.magnitude().max_abs(),
            max_ne: state.ne.iter().cloned().fold(0.0, f64::max),
        });
    };
    for n in 0..config.steps {
        let e = field(&state, solver).map_err(|e| e.at_step(n))?;
        if n % config.sample_every == 0 {
            record(&state, &e, &mut diag);
        }
        if config.snapshot_steps.contains(&n) {
            diag.snapshots.push(snapshot(n, &state, &e));
        }
        let de = discharge_energy_increment(&state, &e, &config.chemistry, config.dt).map_err(|e| e.at_step(n))?;
        let (mut next, rep) = step(&state, &e, &config.chemistry, config.dt).map_err(|e| e.at_step(n))?;
        next.energy = state.energy + de;
        diag.floored += rep.floored;
        diag.clamped += rep.clamped;
        diag.dt_warnings += rep.dt_exceeded(config.dt) as usize;
        diag.min_density = next
            .ne
            .iter()
            .chain(&next.np)
            .chain(&next.nn)
            .cloned()
            .fold(diag.min_density, f64::min);
        state = next;
    }
    let e = field(&state, solver).map_err(|e| e.at_step(config.steps))?;
    record(&state, &e, &mut diag);
    if config.snapshot_steps.contains(&config.steps) {
        diag.snapshots.push(snapshot(config.steps, &state, &e));
    }
    diag.final_state = state;
    Ok(diag)
}

fn snapshot(step: usize, state: &StreamerState, e: &VectorField) -> StreamerSnapshot {
    StreamerSnapshot {
        step,
        t: state.t,
        ne: state.field(&state.ne),
        np: state.field(&state.np),
        nn: state.field(&state.nn),
        e_norm: e.magnitude(),
    }
}
