//! One function per subcommand. Each writes its artefacts below
//! `Context::out` and returns the in-memory results for callers and tests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use plasmanet_core::analytic::{mode_field, mode_potential, normalization_ratio, solve_analytic};
use plasmanet_core::consts::reference_charge_scale;
use plasmanet_core::dataset::{
    build_dataset, default_boundary, evaluate, AnalyticPredictor, CgPredictor, DatasetManifest, DatasetRequest,
    MetricTable, Split, TargetSolver, TwoGaussians,
};
use plasmanet_core::field::{gradient_to_efield, mean_abs, norm_1, read_field, write_field};
use plasmanet_core::linsolve::{PoissonOperator, Preconditioner, SolveReport};
use plasmanet_core::{GridSpec, PoissonPredictor, ScalarField, VectorField};
use plasmanet_net::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use plasmanet_net::rf::{effective_rf, empirical_rf, optimal_params, receptive_field};
use plasmanet_net::train::{train_with_callback, History, TrainingData};
use plasmanet_net::{infer, NetPredictor, Network};
use plasmanet_sim::oscillation::{self, measure_period, plasma_frequency, OscillationDiagnostics};
use plasmanet_sim::streamer::{self, StreamerDiagnostics};
use plasmanet_sim::PoissonBackend;

use crate::config::{Problem, RunConfig, SimBackend};
use crate::{CliError, Result};

/// Effective configuration, output directory and the log of one command.
#[derive(Debug)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub quiet: bool,
    pub log: Vec<String>,
    /// Named wall-clock phases for the provenance record.
    pub timings: Vec<(String, f64)>,
}

impl Context {
    pub fn new(config: RunConfig, out: impl Into<PathBuf>) -> Self {
        Self {
            config,
            out: out.into(),
            quiet: false,
            log: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn say(&mut self, line: impl Into<String>) {
        let line = line.into();
        if !self.quiet {
            println!("{line}");
        }
        self.log.push(line);
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.config.dataset.dir.clone().unwrap_or_else(|| self.out.join("datasets"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.config
            .network
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("model.pnet"))
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        let p = self.out.join(name);
        fs::write(&p, contents)?;
        Ok(p)
    }

    fn time<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = f(self)?;
        self.timings.push((name.to_string(), t.elapsed().as_secs_f64()));
        Ok(r)
    }

    fn load_manifest(&self, kind: &plasmanet_core::dataset::DatasetKind) -> Result<DatasetManifest> {
        let dir = self.dataset_dir().join(kind.name());
        DatasetManifest::load(&dir).map_err(|e| {
            CliError::Config(format!(
                "cannot load dataset '{}' from {} ({e}); run the dataset command first",
                kind.name(),
                dir.display()
            ))
        })
    }

    /// The trained network, or `None` when no checkpoint exists yet.
    pub fn trained_network(&self) -> Result<Option<NetPredictor>> {
        let p = self.checkpoint_path();
        if !p.exists() {
            return Ok(None);
        }
        let c = load_checkpoint(&p)?;
        Ok(Some(NetPredictor {
            network: c.network,
            normalization: c.normalization,
            delta_nn: c.delta_nn,
            label: "network".into(),
        }))
    }

    fn require_network(&self) -> Result<NetPredictor> {
        self.trained_network()?.ok_or_else(|| {
            CliError::Config(format!(
                "no checkpoint at {}; run the train command first",
                self.checkpoint_path().display()
            ))
        })
    }

    /// Untrained network built from `[network]`, scaled for `[grid]`.
    pub fn fresh_network(&self) -> Result<NetPredictor> {
        let g = self.config.grid.spec()?;
        Ok(NetPredictor {
            network: Network::build(&self.config.network.net, self.config.network.seed)?,
            normalization: normalization_ratio(g.lx, g.ly, self.config.dataset.alpha)?,
            delta_nn: g.dx(),
            label: "network(untrained)".into(),
        })
    }
}

fn csv_join(rows: impl IntoIterator<Item = String>, header: &str) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------- dataset

pub fn cmd_dataset(ctx: &mut Context) -> Result<Vec<DatasetManifest>> {
    let grid = ctx.config.grid.spec()?;
    let d = ctx.config.dataset.clone();
    let mut out = Vec::new();
    for kind in &d.kinds {
        let dir = ctx.dataset_dir().join(kind.name());
        let request = DatasetRequest {
            alpha: d.alpha,
            target: d.target_rtol.map_or(TargetSolver::None, |rtol| TargetSolver::Cg { rtol }),
            train_fraction: d.train_fraction,
            ..DatasetRequest::new(kind.clone(), d.count, grid, d.seed)
        };
        let m = ctx.time(&format!("dataset_{}", kind.name()), |_| Ok(build_dataset(&request, &dir)?))?;
        ctx.say(format!(
            "dataset {}: {} samples ({} train), {} rejected, normalization {:e}, in {}",
            kind.name(),
            m.samples.len(),
            m.n_train,
            m.rejected.len(),
            m.normalization,
            dir.display()
        ));
        out.push(m);
    }
    Ok(out)
}

// ---------------------------------------------------------------- solve

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub rhs: ScalarField,
    pub phi: ScalarField,
    pub e: VectorField,
    pub report: SolveReport,
    /// Interior strict local extrema of `φ`.
    pub extrema: usize,
}

fn solve_problem(ctx: &Context) -> Result<ScalarField> {
    let grid = ctx.config.grid.spec()?;
    Ok(match &ctx.config.solve.problem {
        Problem::TwoGaussians => TwoGaussians::default().field(&grid),
        Problem::Zero => ScalarField::zeros(grid),
        Problem::File(p) => read_field(p)?,
    })
}

fn count_extrema(phi: &ScalarField) -> usize {
    let g = phi.grid;
    let mut n = 0;
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let v = phi.at(i, j);
            let nb = [phi.at(i - 1, j), phi.at(i + 1, j), phi.at(i, j - 1), phi.at(i, j + 1)];
            if nb.iter().all(|w| v > *w) || nb.iter().all(|w| v < *w) {
                n += 1;
            }
        }
    }
    n
}

/// Solves `−∇²φ = rhs` on zero Dirichlet data with a named backend.
pub fn solve_with(
    backend: &str,
    rhs: &ScalarField,
    rtol: f64,
    modes: usize,
    max_iter: usize,
    network: Option<&NetPredictor>,
) -> Result<(ScalarField, SolveReport)> {
    let grid = rhs.grid;
    let op = PoissonOperator::new(grid, &default_boundary(&grid))?;
    let direct = |phi: ScalarField, secs: f64| -> Result<(ScalarField, SolveReport)> {
        let residual = op.relative_residual(rhs, &phi)?;
        Ok((
            phi,
            SolveReport {
                iterations: 0,
                residual,
                seconds: secs,
                converged: true,
                history: vec![residual],
            },
        ))
    };
    match backend {
        "cg" => {
            let it = if max_iter == 0 { 20 * grid.len() } else { max_iter };
            Ok(op.cg(rhs, rtol, it, Preconditioner::Diagonal, None)?)
        }
        "jacobi" => {
            let it = if max_iter == 0 { 200 * grid.len() } else { max_iter };
            Ok(op.jacobi(rhs, rtol, it)?)
        }
        "analytic" => {
            let t = Instant::now();
            let phi = solve_analytic(rhs, modes.min(grid.nx - 1), modes.min(grid.ny - 1))?;
            direct(phi, t.elapsed().as_secs_f64())
        }
        "network" => {
            let net = network.ok_or_else(|| CliError::Config("the network backend needs a checkpoint".into()))?;
            let t = Instant::now();
            let (phi, _) = infer(&net.network, rhs, net.normalization, net.delta_nn)?;
            direct(phi, t.elapsed().as_secs_f64())
        }
        other => Err(CliError::Config(format!(
            "unknown backend '{other}' (expected cg, jacobi, analytic or network)"
        ))),
    }
}

pub fn cmd_solve(ctx: &mut Context) -> Result<SolveOutcome> {
    let rhs = solve_problem(ctx)?;
    let s = ctx.config.solve.clone();
    let net = if s.backend == "network" {
        Some(ctx.require_network()?)
    } else {
        None
    };
    let (phi, report) = ctx.time("solve", |_| solve_with(&s.backend, &rhs, s.rtol, s.modes, s.max_iter, net.as_ref()))?;
    if !report.converged {
        ctx.say(format!("warning: {} stopped at residual {:e}", s.backend, report.residual));
    }
    let e = gradient_to_efield(&phi);
    let extrema = count_extrema(&phi);
    fs::create_dir_all(&ctx.out)?;
    write_field(ctx.out.join("rhs.fld"), &rhs)?;
    write_field(ctx.out.join("phi.fld"), &phi)?;
    write_field(ctx.out.join("ex.fld"), &ScalarField { grid: e.grid, values: e.x.clone() })?;
    write_field(ctx.out.join("ey.fld"), &ScalarField { grid: e.grid, values: e.y.clone() })?;
    ctx.write(
        "solve.csv",
        csv_join([report.csv_row(&s.backend, rhs.grid.len(), s.rtol)], SolveReport::CSV_HEADER),
    )?;
    ctx.say(format!(
        "solve {}: {} iterations, residual {:e}, max|phi| {:e} V, max|E| {:e} V/m, {} interior extrema",
        s.backend,
        report.iterations,
        report.residual,
        phi.max_abs(),
        e.magnitude().max_abs(),
        extrema
    ));
    Ok(SolveOutcome {
        rhs,
        phi,
        e,
        report,
        extrema,
    })
}

// ---------------------------------------------------------------- train

pub fn cmd_train(ctx: &mut Context) -> Result<History> {
    let t = ctx.config.training.clone();
    let kind = t
        .dataset
        .clone()
        .or_else(|| ctx.config.dataset.kinds.first().cloned())
        .ok_or_else(|| CliError::Config("no dataset to train on".into()))?;
    let manifest = ctx.load_manifest(&kind)?;
    let data = ctx.time("load", |_| Ok(TrainingData::from_manifest(&manifest)?))?;
    let ckpt = ctx.checkpoint_path();
    let mut network = if ctx.config.network.resume && ckpt.exists() {
        let c = load_checkpoint(&ckpt)?;
        ctx.say(format!("resuming from {}", ckpt.display()));
        c.network
    } else {
        Network::build(&ctx.config.network.net, ctx.config.network.seed)?
    };

    let cfg = &network.config;
    let rf = receptive_field(cfg);
    let n_p = data.grid.nx.max(data.grid.ny);
    ctx.say(format!(
        "network {} depths {:?} kernel {}: {} parameters, widths {:?}",
        cfg.architecture.name(),
        cfg.depths,
        cfg.kernel,
        network.n_params(),
        network.widths
    ));
    ctx.say(format!(
        "receptive field {} (branches {:?}), effective {} at n_p = {n_p}",
        rf.total,
        rf.per_branch,
        effective_rf(rf.total, cfg, n_p)
    ));
    match optimal_params(n_p, cfg.kernel) {
        Some((rf_opt, nb_opt)) => ctx.say(format!("optimal for n_p = {n_p}: RF = {rf_opt}, n_b = {nb_opt}")),
        None => ctx.say(format!("no optimal parameters: n_p = {n_p} is not larger than the kernel")),
    }
    if let Some(w) = network.degenerate_branch_warning(data.grid.nx, data.grid.ny) {
        ctx.say(format!("warning: {w}"));
    }
    ctx.say(format!(
        "training on {} ({} train / {} validation), {} epochs",
        kind.name(),
        data.train.len(),
        data.validation.len(),
        t.train.epochs
    ));

    let mut lines = Vec::new();
    let quiet = ctx.quiet;
    let history = ctx.time("train", |_| {
        Ok(train_with_callback(&mut network, &data, t.weights, &t.train, |r| {
            let line = format!(
                "epoch {:>4}  train {:.4e}  val {:.4e}  phi_l1 {:.4e}  E_l1 {:.4e}  E_linf {:.4e}",
                r.epoch, r.train_loss, r.val_loss, r.phi_l1, r.e_l1, r.e_linf
            );
            if !quiet {
                println!("{line}");
            }
            lines.push(line);
        })?)
    })?;
    ctx.log.extend(lines);

    if let Some(parent) = ckpt.parent() {
        fs::create_dir_all(parent)?;
    }
    save_checkpoint(
        &ckpt,
        &Checkpoint {
            network,
            normalization: data.normalization,
            delta_nn: data.grid.dx(),
        },
    )?;
    ctx.write("training.csv", history.to_csv())?;
    ctx.say(format!("checkpoint written to {}", ckpt.display()));
    Ok(history)
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub m: usize,
    pub factor: f64,
    pub nx: usize,
    pub ny: usize,
    /// `‖φ − φ_exact‖₁ / mean|φ_exact|`.
    pub phi_rel: f64,
    pub e_rel: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "n,m,factor,nx,ny,phi_rel,E_rel";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:e},{:e}",
            self.n, self.m, self.factor, self.nx, self.ny, self.phi_rel, self.e_rel
        )
    }
}

/// Single-mode evaluation of a predictor on the trained domain at scaled
/// node counts `round(f (n − 1)) + 1`.
pub fn resolution_sweep(
    predictor: &dyn PoissonPredictor,
    trained: &GridSpec,
    factors: &[f64],
    modes: &[(usize, usize)],
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &(n, m) in modes {
        for &f in factors {
            if !(f > 0.0) {
                return Err(CliError::Config(format!("resolution factor must be positive, got {f}")));
            }
            let nx = ((trained.nx - 1) as f64 * f).round() as usize + 1;
            let ny = ((trained.ny - 1) as f64 * f).round() as usize + 1;
            let grid = trained.with_nodes(nx, ny)?;
            let amp = reference_charge_scale();
            let rhs = mode_field(n, m, amp, &grid)?;
            let exact = mode_potential(n, m, amp, &grid)?;
            let phi = predictor.predict(&rhs)?;
            let (ep, ee) = (gradient_to_efield(&phi), gradient_to_efield(&exact));
            rows.push(SweepRow {
                n,
                m,
                factor: f,
                nx,
                ny,
                phi_rel: norm_1(&phi, &exact)? / mean_abs(&exact),
                e_rel: norm_1(&ep, &ee)? / mean_abs(&ee),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub tables: Vec<MetricTable>,
    pub sweep: Vec<SweepRow>,
}

pub fn cmd_eval(ctx: &mut Context) -> Result<EvalOutcome> {
    let e = ctx.config.eval.clone();
    let split = match e.split.as_str() {
        "train" => Split::Train,
        "validation" => Split::Validation,
        s => return Err(CliError::Config(format!("eval.split must be train or validation, got '{s}'"))),
    };
    let manifests = e
        .datasets
        .iter()
        .map(|k| ctx.load_manifest(k))
        .collect::<Result<Vec<_>>>()?;
    let mut tables = Vec::new();
    let mut sweep = Vec::new();
    for b in &e.backends {
        let net;
        let predictor: &dyn PoissonPredictor = match b.as_str() {
            "cg" => &CgPredictor { rtol: e.rtol },
            "analytic" => &AnalyticPredictor { modes: e.modes },
            "network" => {
                net = ctx.require_network()?;
                &net
            }
            other => return Err(CliError::Config(format!("unknown eval backend '{other}'"))),
        };
        let table = ctx.time(&format!("eval_{b}"), |_| Ok(evaluate(predictor, &manifests, split)?))?;
        for r in &table.rows {
            ctx.say(format!(
                "{:<16} {:<16} n={:<4} phi_l1 {:.4e}  E_l1 {:.4e}  E_linf {:.4e}",
                table.predictor, r.dataset, r.samples, r.phi_l1, r.e_l1, r.e_linf
            ));
        }
        tables.push(table);
        if b == "network" && !e.resolutions.is_empty() {
            let grid = ctx.config.grid.spec()?;
            let rows = resolution_sweep(predictor, &grid, &e.resolutions, &e.sweep_modes)?;
            for &(n, m) in &e.sweep_modes {
                let mine: Vec<&SweepRow> = rows.iter().filter(|r| (r.n, r.m) == (n, m)).collect();
                for r in &mine {
                    ctx.say(format!(
                        "mode ({n},{m}) at {}x{} (x{}): phi {:.4e}  E {:.4e}",
                        r.nx, r.ny, r.factor, r.phi_rel, r.e_rel
                    ));
                }
                if let Some(best) = mine.iter().min_by(|a, b| a.phi_rel.total_cmp(&b.phi_rel)) {
                    ctx.say(format!("mode ({n},{m}) minimum at x{}", best.factor));
                }
            }
            sweep = rows;
        }
    }
    let mut csv = String::from(MetricTable::CSV_HEADER);
    csv.push('\n');
    for t in &tables {
        csv.extend(t.to_csv().lines().skip(1).map(|l| format!("{l}\n")));
    }
    ctx.write("metrics.csv", csv)?;
    if !sweep.is_empty() {
        ctx.write("resolution.csv", csv_join(sweep.iter().map(SweepRow::csv_row), SweepRow::CSV_HEADER))?;
    }
    Ok(EvalOutcome { tables, sweep })
}

// ---------------------------------------------------------------- simulations

fn sim_backend(ctx: &Context, b: &SimBackend) -> Result<PoissonBackend> {
    match b.backend.as_str() {
        "cg" => Ok(PoissonBackend::Cg { rtol: b.rtol }),
        "analytic" => Ok(PoissonBackend::Analytic { modes: b.modes }),
        "network" => Ok(PoissonBackend::Network(Box::new(ctx.require_network()?))),
        o => Err(CliError::Config(format!("unknown simulation backend '{o}'"))),
    }
}

#[derive(Debug, Clone)]
pub struct OscillationOutcome {
    pub diagnostics: OscillationDiagnostics,
    pub expected_period: f64,
    pub measured_period: Option<f64>,
    pub envelope_drift: f64,
}

pub fn cmd_oscillate(ctx: &mut Context) -> Result<OscillationOutcome> {
    let cfg = ctx.config.oscillation.clone();
    let backend = sim_backend(ctx, &ctx.config.oscillation_backend)?;
    let (_, tp) = plasma_frequency(cfg.n0)?;
    ctx.say(format!(
        "oscillation {}x{}, n0 {:e}, backend {}, T_p {:.4e} s",
        cfg.grid.nx,
        cfg.grid.ny,
        cfg.n0,
        backend.name(),
        tp
    ));
    let diag = ctx.time("oscillate", |_| Ok(oscillation::run(&cfg, backend)?))?;
    let measured = measure_period(&diag.times, &diag.mean_probe).ok();
    let drift = diag.envelope_drift(tp);
    ctx.write("oscillation.csv", diag.to_csv())?;
    for (k, (t, field)) in diag.snapshots.iter().enumerate() {
        write_field(ctx.out.join(format!("density_{k}.fld")), field)?;
        ctx.say(format!("snapshot {k} at t = {t:e} s"));
    }
    let mut s = String::new();
    let _ = writeln!(s, "dt = {:e}", diag.dt);
    let _ = writeln!(s, "steps = {}", diag.times.len().saturating_sub(1));
    let _ = writeln!(s, "expected_period = {tp:e}");
    let _ = writeln!(s, "measured_period = {}", measured.map_or("none".into(), |p| format!("{p:e}")));
    let _ = writeln!(s, "envelope_drift = {drift:e}");
    let _ = writeln!(s, "amplitude_ratio = {:e}", diag.amplitude_ratio());
    ctx.write("summary.txt", &s)?;
    ctx.say(format!(
        "period {} (expected {tp:.4e}), envelope drift {:.3}%, amplitude ratio {:.3}",
        measured.map_or("not measurable".into(), |p| format!("{p:.4e} s")),
        100.0 * drift,
        diag.amplitude_ratio()
    ));
    Ok(OscillationOutcome {
        diagnostics: diag,
        expected_period: tp,
        measured_period: measured,
        envelope_drift: drift,
    })
}

pub fn cmd_streamer(ctx: &mut Context) -> Result<StreamerDiagnostics> {
    let cfg = ctx.config.streamer.clone();
    let backend = sim_backend(ctx, &ctx.config.streamer_backend)?;
    ctx.say(format!(
        "streamer {}x{}, {} steps of {:e} s, backend {}",
        cfg.grid.nx,
        cfg.grid.ny,
        cfg.steps,
        cfg.dt,
        backend.name()
    ));
    let diag = ctx.time("streamer", |_| Ok(streamer::run(&cfg, backend)?))?;
    ctx.write("streamer.csv", diag.to_csv())?;
    for s in &diag.snapshots {
        let norm = [("ne", &s.ne), ("np", &s.np), ("nn", &s.nn), ("E", &s.e_norm)];
        for (name, f) in norm {
            write_field(ctx.out.join(format!("{name}_{:05}.fld", s.step)), f)?;
        }
    }
    let last = diag.rows.last().copied();
    let mut s = String::new();
    let _ = writeln!(s, "floored = {:e}", diag.floored);
    let _ = writeln!(s, "clamped = {}", diag.clamped);
    let _ = writeln!(s, "dt_warnings = {}", diag.dt_warnings);
    let _ = writeln!(s, "min_density = {:e}", diag.min_density);
    if let Some(r) = last {
        let _ = writeln!(s, "x_neg = {:e}\nx_pos = {:e}\nEd = {:e}", r.x_neg, r.x_pos, r.energy);
    }
    ctx.write("summary.txt", &s)?;
    if diag.dt_warnings > 0 {
        ctx.say(format!("warning: dt exceeded the stability estimate on {} steps", diag.dt_warnings));
    }
    if let Some(r) = last {
        ctx.say(format!(
            "fronts at t = {:e} s: x_neg {:.4e} m, x_pos {:.4e} m; E_d {:.4e} J",
            r.t, r.x_neg, r.x_pos, r.energy
        ));
    }
    Ok(diag)
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub solver: String,
    pub n: usize,
    pub nodes: usize,
    pub rtol: f64,
    pub iterations: f64,
    pub residual: f64,
    pub seconds: f64,
    pub repetitions: usize,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "solver,nodes,rtol,iterations,residual,seconds,repetitions";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{},{:e},{:e},{}",
            self.solver, self.nodes, self.rtol, self.iterations, self.residual, self.seconds, self.repetitions
        )
    }
}

/// Mean wall-clock time, iteration count and residual of each backend on
/// the two-Gaussian problem over square grids of side `sizes` on a domain
/// of side `length`.
pub fn bench(
    sizes: &[usize],
    length: f64,
    backends: &[String],
    rtol: f64,
    repetitions: usize,
    network: Option<&NetPredictor>,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for b in backends {
        for &n in sizes {
            let grid = GridSpec::square(n, length)?;
            let rhs = TwoGaussians::default().field(&grid);
            let (mut it, mut res, mut secs) = (0.0, 0.0, 0.0);
            for _ in 0..repetitions {
                let t = Instant::now();
                let (_, rep) = solve_with(b, &rhs, rtol, 20, 0, network)?;
                secs += t.elapsed().as_secs_f64();
                it += rep.iterations as f64;
                res += rep.residual;
            }
            let r = repetitions as f64;
            rows.push(BenchRow {
                solver: b.clone(),
                n,
                nodes: grid.len(),
                rtol,
                iterations: it / r,
                residual: res / r,
                seconds: secs / r,
                repetitions,
            });
        }
    }
    Ok(rows)
}

pub fn cmd_bench(ctx: &mut Context) -> Result<Vec<BenchRow>> {
    let b = ctx.config.bench.clone();
    let net = if b.backends.iter().any(|s| s == "network") {
        match ctx.trained_network()? {
            Some(n) => Some(n),
            None => {
                ctx.say("no checkpoint found; timing an untrained network of the configured shape");
                Some(ctx.fresh_network()?)
            }
        }
    } else {
        None
    };
    let length = ctx.config.grid.lx;
    let rows = ctx.time("bench", |_| bench(&b.sizes, length, &b.backends, b.rtol, b.repetitions, net.as_ref()))?;
    for r in &rows {
        ctx.say(format!(
            "{:<8} {:>4}x{:<4} iterations {:>8.1}  residual {:.2e}  {:.4e} s",
            r.solver, r.n, r.n, r.iterations, r.residual, r.seconds
        ));
    }
    ctx.write("bench.csv", csv_join(rows.iter().map(BenchRow::csv_row), BenchRow::CSV_HEADER))?;
    Ok(rows)
}

// ---------------------------------------------------------------- rf

#[derive(Debug, Clone, PartialEq)]
pub struct RfReport {
    pub formula: usize,
    pub per_branch: Vec<usize>,
    pub empirical: usize,
    pub probe_size: usize,
    pub n_p: usize,
    pub effective: usize,
    pub optimal: Option<(usize, usize)>,
}

/// Smallest multiple of `2^n_b` that holds the formula value with margin.
fn auto_probe_size(rf: usize, n_b: usize) -> usize {
    let q = 1usize << n_b;
    (rf + 2 * q).div_ceil(q) * q + 1
}

pub fn cmd_rf(ctx: &mut Context) -> Result<RfReport> {
    let cfg = ctx.config.network.net.clone();
    let net = Network::build(&cfg, ctx.config.network.seed)?;
    let rf = receptive_field(&cfg);
    let probe = match ctx.config.rf.probe_size {
        0 => auto_probe_size(rf.total, cfg.n_b),
        s => s,
    };
    let empirical = empirical_rf(&net, probe, probe)?;
    let n_p = match ctx.config.rf.n_p {
        0 => ctx.config.grid.nx.max(ctx.config.grid.ny),
        n => n,
    };
    let report = RfReport {
        formula: rf.total,
        per_branch: rf.per_branch.clone(),
        empirical,
        probe_size: probe,
        n_p,
        effective: effective_rf(rf.total, &cfg, n_p),
        optimal: optimal_params(n_p, cfg.kernel),
    };
    ctx.say(format!(
        "{} depths {:?} kernel {}: formula RF {} (branches {:?})",
        cfg.architecture.name(),
        cfg.depths,
        cfg.kernel,
        report.formula,
        report.per_branch
    ));
    ctx.say(format!("empirical RF {} on a {probe}x{probe} probe", report.empirical));
    ctx.say(format!("effective RF at n_p = {n_p}: {}", report.effective));
    match report.optimal {
        Some((r, b)) => ctx.say(format!("optimal for n_p = {n_p}: RF = {r}, n_b = {b}")),
        None => ctx.say(format!("no optimal parameters for n_p = {n_p}")),
    }
    let mut s = String::from("formula,empirical,probe_size,n_p,effective,optimal_rf,optimal_nb\n");
    let (orf, onb) = report.optimal.unwrap_or((0, 0));
    let _ = writeln!(
        s,
        "{},{},{},{},{},{orf},{onb}",
        report.formula, report.empirical, probe, n_p, report.effective
    );
    ctx.write("rf.csv", s)?;
    Ok(report)
}

/// Runs `command` against a context, writing `config.ini`, `log.txt` and
/// the `run.txt` record whatever the outcome.
pub fn dispatch(command: &str, ctx: &mut Context, config_path: Option<&Path>) -> Result<()> {
    let canonical = ctx.config.to_ini();
    let prov = crate::provenance::Provenance::start(command, config_path, &canonical, ctx.config.dataset.seed);
    fs::create_dir_all(&ctx.out)?;
    fs::write(ctx.out.join("config.ini"), &canonical)?;
    let r = match command {
        "dataset" => cmd_dataset(ctx).map(drop),
        "solve" => cmd_solve(ctx).map(drop),
        "train" => cmd_train(ctx).map(drop),
        "eval" => cmd_eval(ctx).map(drop),
        "oscillate" => cmd_oscillate(ctx).map(drop),
        "streamer" => cmd_streamer(ctx).map(drop),
        "bench" => cmd_bench(ctx).map(drop),
        "rf" => cmd_rf(ctx).map(drop),
        other => Err(CliError::Config(format!("unknown command '{other}'"))),
    };
    let status = match &r {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("error: {e}"),
    };
    let mut log = ctx.log.join("\n");
    log.push('\n');
    fs::write(ctx.out.join("log.txt"), log)?;
    prov.write(&ctx.out, &status, &ctx.timings)?;
    r
}
