//! Charge-density dataset generators, input normalization, on-disk datasets
//! and evaluation tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analytic::{normalization_ratio, synthesize, ModeSpectrum};
use crate::consts::reference_charge_scale;
use crate::error::{Error, Result};
use crate::field::{
    gradient_to_efield, norm_1, norm_inf, read_field, write_field, Geometry, GridSpec, ScalarField,
};
use crate::linsolve::{BoundarySpec, PoissonOperator, Preconditioner};
use crate::PoissonPredictor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DatasetKind {
    /// Bicubic interpolation of a coarse random grid with structure size `c`.
    Random { c: usize },
    /// `n × n` random sine modes with power-law decay `1/(nᵖ + mᵖ)`.
    Fourier { n: usize, p: f64 },
}

impl DatasetKind {
    pub fn name(&self) -> String {
        match self {
            DatasetKind::Random { c } => format!("random_{c}"),
            DatasetKind::Fourier { n, p } => format!("fourier_{n}_{p}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown dataset kind '{s}'"));
        let parts: Vec<&str> = s.trim().split('_').collect();
        match parts.as_slice() {
            ["random", c] => Ok(DatasetKind::Random {
                c: c.parse().map_err(|_| bad())?,
            }),
            ["fourier", n, p] => Ok(DatasetKind::Fourier {
                n: n.parse().map_err(|_| bad())?,
                p: p.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }

    pub fn generate(&self, grid: &GridSpec, rng: &mut impl Rng) -> Result<ScalarField> {
        match *self {
            DatasetKind::Random { c } => gen_random(grid, c, rng),
            DatasetKind::Fourier { n, p } => gen_fourier(grid, n, p, rng),
        }
    }
}

/// Per-sample generator, independent of how many other samples exist.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * (2.0 * p1
        + (-p0 + p2) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
        + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3)
}

/// Interpolate `coarse` (length `nc`) onto `n` corner-aligned nodes.
fn interp_line(coarse: &[f64], n: usize) -> Vec<f64> {
    let nc = coarse.len();
    let at = |k: isize| coarse[k.clamp(0, nc as isize - 1) as usize];
    (0..n)
        .map(|i| {
            let t = i as f64 * (nc - 1) as f64 / (n - 1) as f64;
            let k = (t.floor() as usize).min(nc - 2);
            let f = t - k as f64;
            let k = k as isize;
            catmull_rom(at(k - 1), at(k), at(k + 1), at(k + 2), f)
        })
        .collect()
}

/// Bicubic (Catmull-Rom) upsampling of a row-major `ncx × ncy` grid.
pub fn bicubic_upsample(coarse: &[f64], ncx: usize, ncy: usize, nx: usize, ny: usize) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = (0..ncy)
        .map(|j| interp_line(&coarse[j * ncx..(j + 1) * ncx], nx))
        .collect();
    let mut out = vec![0.0; nx * ny];
    let mut column = vec![0.0; ncy];
    for i in 0..nx {
        for (j, row) in rows.iter().enumerate() {
            column[j] = row[i];
        }
        for (j, v) in interp_line(&column, ny).into_iter().enumerate() {
            out[j * nx + i] = v;
        }
    }
    out
}

/// Unscaled `random_c` sample in roughly [−1, 1].
pub fn gen_random_unit(grid: &GridSpec, c: usize, rng: &mut impl Rng) -> Result<ScalarField> {
    if c == 0 {
        return Err(Error::InvalidArgument("structure size c must be at least 1".into()));
    }
    let (ncx, ncy) = (grid.nx / c, grid.ny / c);
    if ncx < 2 || ncy < 2 {
        return Err(Error::InvalidArgument(format!(
            "coarse grid {ncx}x{ncy} is smaller than 2x2 for c = {c}"
        )));
    }
    let coarse: Vec<f64> = (0..ncx * ncy).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let values = bicubic_upsample(&coarse, ncx, ncy, grid.nx, grid.ny);
    Ok(ScalarField { grid: *grid, values })
}

pub fn gen_random(grid: &GridSpec, c: usize, rng: &mut impl Rng) -> Result<ScalarField> {
    Ok(gen_random_unit(grid, c, rng)?.scaled(reference_charge_scale()))
}

pub fn gen_fourier(grid: &GridSpec, n: usize, p: f64, rng: &mut impl Rng) -> Result<ScalarField> {
    if n == 0 {
        return Err(Error::InvalidArgument("fourier band limit must be at least 1".into()));
    }
    if n > grid.nx - 1 || n > grid.ny - 1 {
        return Err(Error::InvalidArgument(format!(
            "{n} modes exceed the grid Nyquist limit ({}, {})",
            grid.nx - 1,
            grid.ny - 1
        )));
    }
    let scale = reference_charge_scale();
    let mut spec = ModeSpectrum::zeros(n, n, grid.lx, grid.ly)?;
    for a in 1..=n {
        for b in 1..=n {
            let decay = (a as f64).powf(p) + (b as f64).powf(p);
            spec.set(a, b, rng.gen_range(-1.0..=1.0) / decay * scale);
        }
    }
    let cart = GridSpec {
        geometry: Geometry::Cartesian,
        ..*grid
    };
    let mut field = synthesize(&spec, &cart)?;
    field.grid = *grid;
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoGaussians {
    pub amplitude: f64,
    /// Centres as fractions of the domain lengths.
    pub centers: [(f64, f64); 2],
    /// Standard deviations as fractions of the domain lengths.
    pub sigma: f64,
}

impl Default for TwoGaussians {
    fn default() -> Self {
        Self {
            amplitude: reference_charge_scale(),
            centers: [(0.35, 0.5), (0.65, 0.5)],
            sigma: 0.1,
        }
    }
}

impl TwoGaussians {
    pub fn field(&self, grid: &GridSpec) -> ScalarField {
        let (sx, sy) = (self.sigma * grid.lx, self.sigma * grid.ly);
        ScalarField::from_fn(*grid, |x, y| {
            self.centers
                .iter()
                .map(|(cx, cy)| {
                    let u = (x - cx * grid.lx) / sx;
                    let v = (y - cy * grid.ly) / sy;
                    (-0.5 * (u * u + v * v)).exp()
                })
                .sum::<f64>()
                * self.amplitude
        })
    }
}

pub fn normalize_input(rhs: &ScalarField, ratio: f64) -> Result<ScalarField> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::InvalidArgument(format!("normalization ratio must be positive, got {ratio}")));
    }
    Ok(rhs.scaled(ratio))
}

pub fn denormalize_input(rhs: &ScalarField, ratio: f64) -> Result<ScalarField> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::InvalidArgument(format!("normalization ratio must be positive, got {ratio}")));
    }
    Ok(rhs.scaled(1.0 / ratio))
}

/// Zero-Dirichlet boundaries, with the axis as a symmetry line on
/// axisymmetric grids.
pub fn default_boundary(grid: &GridSpec) -> BoundarySpec {
    match grid.geometry {
        Geometry::Cartesian => BoundarySpec::zero_dirichlet(),
        Geometry::Axisymmetric => BoundarySpec::axisymmetric_zero(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetSolver {
    None,
    Cg { rtol: f64 },
}

#[derive(Debug, Clone)]
pub struct DatasetRequest {
    pub kind: DatasetKind,
    pub count: usize,
    pub grid: GridSpec,
    pub seed: u64,
    pub alpha: f64,
    pub target: TargetSolver,
    pub train_fraction: f64,
}

impl DatasetRequest {
    pub fn new(kind: DatasetKind, count: usize, grid: GridSpec, seed: u64) -> Self {
        Self {
            kind,
            count,
            grid,
            seed,
            alpha: 0.1,
            target: TargetSolver::Cg { rtol: 1e-10 },
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleEntry {
    pub index: usize,
    pub rhs_file: String,
    pub phi_file: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    All,
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub kind: DatasetKind,
    pub count: usize,
    pub grid: GridSpec,
    pub seed: u64,
    pub alpha: f64,
    /// Multiplier applied to physical `R` before it enters a network.
    pub normalization: f64,
    pub target_rtol: Option<f64>,
    pub n_train: usize,
    pub rejected: Vec<usize>,
    pub samples: Vec<SampleEntry>,
    pub dir: PathBuf,
}

pub const MANIFEST_NAME: &str = "manifest.txt";

impl DatasetManifest {
    pub fn has_targets(&self) -> bool {
        self.target_rtol.is_some()
    }

    pub fn entries(&self, split: Split) -> &[SampleEntry] {
        let n = self.n_train.min(self.samples.len());
        match split {
            Split::All => &self.samples,
            Split::Train => &self.samples[..n],
            Split::Validation => &self.samples[n..],
        }
    }

    pub fn load_entry(&self, entry: &SampleEntry) -> Result<(ScalarField, Option<ScalarField>)> {
        let rhs = read_field(self.dir.join(&entry.rhs_file))?;
        let phi = match &entry.phi_file {
            Some(f) => Some(read_field(self.dir.join(f))?),
            None => None,
        };
        for f in std::iter::once(&rhs).chain(phi.as_ref()) {
            if f.grid != self.grid {
                return Err(Error::ShapeMismatch(format!(
                    "sample {} does not match the manifest grid",
                    entry.index
                )));
            }
        }
        Ok((rhs, phi))
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<(ScalarField, Option<ScalarField>)>> {
        self.entries(split).iter().map(|e| self.load_entry(e)).collect()
    }

    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let mut s = String::new();
        let _ = writeln!(s, "kind={}", self.kind.name());
        let _ = writeln!(s, "count={}", self.count);
        let _ = writeln!(s, "nx={}\nny={}\nlx={}\nly={}", g.nx, g.ny, g.lx, g.ly);
        let _ = writeln!(s, "geometry={}", g.geometry.name());
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "alpha={}", self.alpha);
        let _ = writeln!(s, "normalization={}", self.normalization);
        match self.target_rtol {
            Some(r) => {
                let _ = writeln!(s, "targets=cg\ntarget_rtol={r}");
            }
            None => {
                let _ = writeln!(s, "targets=none");
            }
        }
        let _ = writeln!(s, "n_train={}", self.n_train);
        let rejected: Vec<String> = self.rejected.iter().map(|r| r.to_string()).collect();
        let _ = writeln!(s, "rejected={}", rejected.join(","));
        for e in &self.samples {
            match &e.phi_file {
                Some(p) => {
                    let _ = writeln!(s, "sample={} {} {}", e.index, e.rhs_file, p);
                }
                None => {
                    let _ = writeln!(s, "sample={} {}", e.index, e.rhs_file);
                }
            }
        }
        s
    }

    pub fn parse(text: &str, dir: impl Into<PathBuf>) -> Result<Self> {
        let fmt = |m: String| Error::Format(format!("manifest: {m}"));
        let mut kv = std::collections::HashMap::new();
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| fmt(format!("line {} has no '='", lineno + 1)))?;
            if k == "sample" {
                let parts: Vec<&str> = v.split_whitespace().collect();
                if parts.len() < 2 || parts.len() > 3 {
                    return Err(fmt(format!("bad sample line {}", lineno + 1)));
                }
                samples.push(SampleEntry {
                    index: parts[0].parse().map_err(|_| fmt(format!("bad sample index on line {}", lineno + 1)))?,
                    rhs_file: parts[1].to_string(),
                    phi_file: parts.get(2).map(|s| s.to_string()),
                });
            } else {
                kv.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| fmt(format!("missing key '{k}'")));
        fn num<T: std::str::FromStr>(v: &str, k: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Format(format!("manifest: bad value for '{k}': {v}")))
        }
        let grid = GridSpec::new(
            num(get("nx")?, "nx")?,
            num(get("ny")?, "ny")?,
            num(get("lx")?, "lx")?,
            num(get("ly")?, "ly")?,
            Geometry::parse(get("geometry")?)?,
        )?;
        let target_rtol = match get("targets")?.as_str() {
            "none" => None,
            "cg" => Some(num(get("target_rtol")?, "target_rtol")?),
            other => return Err(fmt(format!("unknown targets '{other}'"))),
        };
        let rejected = match kv.get("rejected").map(|s| s.as_str()) {
            None | Some("") => Vec::new(),
            Some(list) => list.split(',').map(|r| num(r.trim(), "rejected")).collect::<Result<_>>()?,
        };
        let manifest = Self {
            kind: DatasetKind::parse(get("kind")?)?,
            count: num(get("count")?, "count")?,
            grid,
            seed: num(get("seed")?, "seed")?,
            alpha: num(get("alpha")?, "alpha")?,
            normalization: num(get("normalization")?, "normalization")?,
            target_rtol,
            n_train: num(get("n_train")?, "n_train")?,
            rejected,
            samples,
            dir: dir.into(),
        };
        if manifest.count == 0 {
            return Err(fmt("count must be at least 1".into()));
        }
        if manifest.samples.iter().any(|s| s.phi_file.is_some() != manifest.has_targets()) {
            return Err(fmt("sample target files disagree with the targets flag".into()));
        }
        Ok(manifest)
    }

    pub fn save(&self) -> Result<()> {
        fs::write(self.dir.join(MANIFEST_NAME), self.to_text())?;
        Ok(())
    }

    /// Read `manifest.txt` from `dir` and check that every listed file exists
    /// and parses.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
        let manifest = Self::parse(&text, dir)?;
        for e in &manifest.samples {
            manifest.load_entry(e)?;
        }
        Ok(manifest)
    }
}

/// Generate (and optionally solve) every sample and write the dataset.
pub fn build_dataset(request: &DatasetRequest, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    if request.count == 0 {
        return Err(Error::InvalidArgument("dataset count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&request.train_fraction) {
        return Err(Error::InvalidArgument("train fraction must lie in [0, 1]".into()));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let grid = request.grid;
    let op = match request.target {
        TargetSolver::None => None,
        TargetSolver::Cg { .. } => Some(PoissonOperator::new(grid, &default_boundary(&grid))?),
    };
    let results: Vec<Result<(ScalarField, Option<ScalarField>)>> = (0..request.count)
        .into_par_iter()
        .map(|index| {
            let mut rng = sample_rng(request.seed, index);
            let rhs = request.kind.generate(&grid, &mut rng)?;
            let phi = match (request.target, &op) {
                (TargetSolver::Cg { rtol }, Some(op)) => {
                    let (phi, rep) = op.cg(&rhs, rtol, 20 * grid.len(), Preconditioner::Diagonal, None)?;
                    rep.converged.then_some(phi)
                }
                _ => None,
            };
            Ok((rhs, phi))
        })
        .collect();

    let mut samples = Vec::new();
    let mut rejected = Vec::new();
    for (index, res) in results.into_iter().enumerate() {
        let (rhs, phi) = res?;
        let rhs_file = format!("R_{index}.pfld");
        let phi_file = match (request.target, phi) {
            (TargetSolver::None, _) => None,
            (_, None) => {
                rejected.push(index);
                continue;
            }
            (_, Some(phi)) => {
                let name = format!("phi_{index}.pfld");
                write_field(dir.join(&name), &phi)?;
                Some(name)
            }
        };
        write_field(dir.join(&rhs_file), &rhs)?;
        samples.push(SampleEntry {
            index,
            rhs_file,
            phi_file,
        });
    }
    let manifest = DatasetManifest {
        kind: request.kind,
        count: request.count,
        grid,
        seed: request.seed,
        alpha: request.alpha,
        normalization: normalization_ratio(grid.lx, grid.ly, request.alpha)?,
        target_rtol: match request.target {
            TargetSolver::None => None,
            TargetSolver::Cg { rtol } => Some(rtol),
        },
        n_train: (samples.len() as f64 * request.train_fraction).round() as usize,
        rejected,
        samples,
        dir: dir.to_path_buf(),
    };
    manifest.save()?;
    Ok(manifest)
}

/// Relative residual of a stored target against its charge density.
pub fn target_residual(manifest: &DatasetManifest, entry: &SampleEntry) -> Result<f64> {
    let (rhs, phi) = manifest.load_entry(entry)?;
    let phi = phi.ok_or_else(|| Error::InvalidArgument("dataset has no targets".into()))?;
    PoissonOperator::new(manifest.grid, &default_boundary(&manifest.grid))?.relative_residual(&rhs, &phi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub dataset: String,
    pub samples: usize,
    pub phi_l1: f64,
    pub e_l1: f64,
    pub e_linf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub predictor: String,
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub const CSV_HEADER: &'static str = "predictor,dataset,samples,phi_l1,E_l1,E_linf";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{:e},{:e}",
                self.predictor, r.dataset, r.samples, r.phi_l1, r.e_l1, r.e_linf
            );
        }
        s
    }

    pub fn row(&self, dataset: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.dataset == dataset)
    }
}

/// Order-independent mean: sums sorted values.
fn stable_mean(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-sample `(‖Δφ‖₁, ‖ΔE‖₁, ‖ΔE‖∞)` against reference potentials.
pub fn sample_metrics(pred: &ScalarField, target: &ScalarField) -> Result<[f64; 3]> {
    let ep = gradient_to_efield(pred);
    let et = gradient_to_efield(target);
    Ok([norm_1(pred, target)?, norm_1(&ep, &et)?, norm_inf(&ep, &et)?])
}

/// Per-dataset rows plus a combined row named `combined` (when more than
/// one dataset is given). Datasets without stored targets are solved with
/// `cg(1e-10)` on the fly.
pub fn evaluate(
    predictor: &dyn PoissonPredictor,
    manifests: &[DatasetManifest],
    split: Split,
) -> Result<MetricTable> {
    let mut rows = Vec::new();
    let mut all: [Vec<f64>; 3] = Default::default();
    for m in manifests {
        let op = PoissonOperator::new(m.grid, &default_boundary(&m.grid))?;
        let mut cols: [Vec<f64>; 3] = Default::default();
        for entry in m.entries(split) {
            let (rhs, target) = m.load_entry(entry)?;
            let target = match target {
                Some(t) => t,
                None => op.cg(&rhs, 1e-10, 20 * m.grid.len(), Preconditioner::Diagonal, None)?.0,
            };
            let pred = predictor.predict(&rhs)?;
            if pred.grid != m.grid {
                return Err(Error::ShapeMismatch(format!(
                    "predictor '{}' returned a {}x{} field for a {}x{} dataset",
                    predictor.name(),
                    pred.grid.nx,
                    pred.grid.ny,
                    m.grid.nx,
                    m.grid.ny
                )));
            }
            let s = sample_metrics(&pred, &target)?;
            for c in 0..3 {
                cols[c].push(s[c]);
                all[c].push(s[c]);
            }
        }
        let samples = cols[0].len();
        let [a, b, c] = cols;
        rows.push(MetricRow {
            dataset: m.kind.name(),
            samples,
            phi_l1: stable_mean(a),
            e_l1: stable_mean(b),
            e_linf: stable_mean(c),
        });
    }
    if manifests.len() > 1 {
        let samples = all[0].len();
        let [a, b, c] = all;
        rows.push(MetricRow {
            dataset: "combined".into(),
            samples,
            phi_l1: stable_mean(a),
            e_l1: stable_mean(b),
            e_linf: stable_mean(c),
        });
    }
    Ok(MetricTable {
        predictor: predictor.name(),
        rows,
    })
}

/// Reference solver usable wherever a predictor is expected.
#[derive(Debug, Clone, Copy)]
pub struct CgPredictor {
    pub rtol: f64,
}

impl PoissonPredictor for CgPredictor {
    fn predict(&self, rhs: &ScalarField) -> Result<ScalarField> {
        let op = PoissonOperator::new(rhs.grid, &default_boundary(&rhs.grid))?;
        let (phi, rep) = op.cg(rhs, self.rtol, 20 * rhs.grid.len(), Preconditioner::Diagonal, None)?;
        if !rep.converged {
            return Err(Error::NotConverged(format!("cg stopped at {:e}", rep.residual)));
        }
        Ok(phi)
    }

    fn name(&self) -> String {
        format!("cg({:e})", self.rtol)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AnalyticPredictor {
    pub modes: usize,
}

impl PoissonPredictor for AnalyticPredictor {
    fn predict(&self, rhs: &ScalarField) -> Result<ScalarField> {
        let n = self.modes.min(rhs.grid.nx - 1);
        let m = self.modes.min(rhs.grid.ny - 1);
        crate::analytic::solve_analytic(rhs, n, m)
    }

    fn name(&self) -> String {
        format!("analytic({})", self.modes)
    }
}
