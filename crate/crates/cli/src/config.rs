//! Flat INI configuration: `[section]` headers, `key = value` lines, `#` or
//! `;` comments. Every section and key has a default; anything not listed
//! below is rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use plasmanet_core::dataset::DatasetKind;
use plasmanet_core::{Geometry, GridSpec};
use plasmanet_net::train::Optimizer;
use plasmanet_net::{Architecture, LossWeights, NetConfig, TrainConfig};
use plasmanet_sim::oscillation::OscillationConfig;
use plasmanet_sim::streamer::StreamerConfig;

use crate::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut current: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let lineno = n + 1;
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::Config(format!("line {lineno}: unterminated section header")))?
                    .trim()
                    .to_ascii_lowercase();
                if name.is_empty() {
                    return Err(CliError::Config(format!("line {lineno}: empty section name")));
                }
                ini.sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {lineno}: expected 'key = value'")))?;
            let section = current
                .as_ref()
                .ok_or_else(|| CliError::Config(format!("line {lineno}: key outside of any section")))?;
            let key = k.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {lineno}: empty key")));
            }
            let map = ini.sections.get_mut(section).expect("section inserted above");
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("line {lineno}: duplicate key '{section}.{key}'")));
            }
        }
        Ok(ini)
    }

    fn take(&mut self, section: &str) -> Section {
        Section {
            name: section.to_string(),
            values: self.sections.remove(section).unwrap_or_default(),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(p) => &line[..p],
        None => line,
    }
}

/// One section being consumed; keys are removed as they are read so
/// leftovers can be reported.
struct Section {
    name: String,
    values: BTreeMap<String, String>,
}

impl Section {
    fn raw(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn err(&self, key: &str, v: &str, what: &str) -> CliError {
        CliError::Config(format!("{}.{key} = '{v}': expected {what}", self.name))
    }

    fn string(&mut self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or_else(|| default.to_string())
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T, what: &str) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.err(key, &v, what)),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        self.parse(key, default, "a non-negative integer")
    }

    fn u64(&mut self, key: &str, default: u64) -> Result<u64> {
        self.parse(key, default, "a non-negative integer")
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        self.parse(key, default, "a number")
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(self.err(key, &v, "true or false")),
            },
        }
    }

    fn opt_f64(&mut self, key: &str, default: Option<f64>) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) if v.eq_ignore_ascii_case("none") => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| self.err(key, &v, "a number or 'none'")),
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str, default: Vec<T>, what: &str) -> Result<Vec<T>> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => split_list(&v)
                .map(|s| s.parse().map_err(|_| self.err(key, &v, what)))
                .collect(),
        }
    }

    fn strings(&mut self, key: &str, default: &[&str]) -> Vec<String> {
        match self.raw(key) {
            None => default.iter().map(|s| s.to_string()).collect(),
            Some(v) => split_list(&v).map(str::to_string).collect(),
        }
    }

    fn path(&mut self, key: &str, base: &Path) -> Option<PathBuf> {
        self.raw(key).filter(|v| !v.is_empty()).map(|v| base.join(v))
    }

    fn finish(self) -> Result<()> {
        if let Some(k) = self.values.keys().next() {
            return Err(CliError::Config(format!("unknown key '{}.{k}'", self.name)));
        }
        Ok(())
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub geometry: Geometry,
}

impl GridSection {
    pub fn spec(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(self.nx, self.ny, self.lx, self.ly, self.geometry)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSection {
    pub kinds: Vec<DatasetKind>,
    pub count: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub alpha: f64,
    pub target_rtol: Option<f64>,
    /// `None` means `<out>/datasets`.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSection {
    pub net: NetConfig,
    pub seed: u64,
    /// `None` means `<out>/model.pnet`.
    pub checkpoint: Option<PathBuf>,
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSection {
    pub train: TrainConfig,
    pub weights: LossWeights,
    /// Dataset kind to train on; defaults to the first of `dataset.kinds`.
    pub dataset: Option<DatasetKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    TwoGaussians,
    Zero,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveSection {
    pub problem: Problem,
    pub backend: String,
    pub rtol: f64,
    pub modes: usize,
    /// 0 picks `20 × nodes` for cg and `200 × nodes` for Jacobi.
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    /// Defaults to `dataset.kinds`.
    pub datasets: Vec<DatasetKind>,
    pub backends: Vec<String>,
    pub split: String,
    pub rtol: f64,
    pub modes: usize,
    pub resolutions: Vec<f64>,
    pub sweep_modes: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimBackend {
    pub backend: String,
    pub rtol: f64,
    pub modes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSection {
    pub sizes: Vec<usize>,
    pub repetitions: usize,
    pub backends: Vec<String>,
    pub rtol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfSection {
    /// Input size for the optimal-parameter rule; 0 uses `grid.nx`.
    pub n_p: usize,
    /// Probe image side for the empirical measurement; 0 picks one large
    /// enough to hold the formula value.
    pub probe_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSection,
    pub dataset: DatasetSection,
    pub network: NetworkSection,
    pub training: TrainingSection,
    pub solve: SolveSection,
    pub eval: EvalSection,
    pub oscillation: OscillationConfig,
    pub oscillation_backend: SimBackend,
    pub streamer: StreamerConfig,
    pub streamer_backend: SimBackend,
    pub bench: BenchSection,
    pub rf: RfSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_ini(Ini::default(), Path::new(".")).expect("defaults are valid")
    }
}

const SECTIONS: [&str; 10] = [
    "grid",
    "dataset",
    "network",
    "training",
    "solve",
    "eval",
    "oscillation",
    "streamer",
    "bench",
    "rf",
];

fn fmt_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_mode(s: &str) -> Option<(usize, usize)> {
    let (n, m) = s.split_once(':')?;
    Some((n.trim().parse().ok()?, m.trim().parse().ok()?))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses `text`, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        Self::from_ini(Ini::parse(text)?, base)
    }

    fn from_ini(mut ini: Ini, base: &Path) -> Result<Self> {
        if let Some(s) = ini.sections.keys().find(|s| !SECTIONS.contains(&s.as_str())) {
            return Err(CliError::Config(format!("unknown section [{s}]")));
        }

        let mut s = ini.take("grid");
        let geometry = Geometry::parse(&s.string("geometry", "cartesian"))?;
        let grid = GridSection {
            nx: s.usize("nx", 64)?,
            ny: s.usize("ny", 64)?,
            lx: s.f64("lx", 0.01)?,
            ly: s.f64("ly", 0.01)?,
            geometry,
        };
        s.finish()?;

        let mut s = ini.take("dataset");
        let kinds = s
            .strings("kinds", &["random_8"])
            .iter()
            .map(|k| DatasetKind::parse(k))
            .collect::<plasmanet_core::Result<Vec<_>>>()?;
        let dataset = DatasetSection {
            kinds,
            count: s.usize("count", 500)?,
            seed: s.u64("seed", 0)?,
            train_fraction: s.f64("train_fraction", 0.8)?,
            alpha: s.f64("alpha", 0.1)?,
            target_rtol: s.opt_f64("target_rtol", Some(1e-10))?,
            dir: s.path("dir", base),
        };
        s.finish()?;

        let mut s = ini.take("network");
        let arch = Architecture::parse(&s.string("architecture", "unet"))?;
        let depths = s.list("depths", vec![2, 2, 2, 7], "a comma-separated list of integers")?;
        let mut net = NetConfig::new(arch, depths, s.usize("kernel", 3)?);
        if let Some(r) = s.raw("width_ratios") {
            net.width_ratios = split_list(&r)
                .map(|v| v.parse().map_err(|_| s.err("width_ratios", &r, "a list of numbers")))
                .collect::<Result<_>>()?;
        }
        net.budget = match s.string("budget", "20000").as_str() {
            "none" => None,
            v => Some(v.parse().map_err(|_| s.err("budget", v, "an integer or 'none'"))?),
        };
        net.base_width = s.usize("base_width", net.base_width)?;
        net.bias = s.bool("bias", false)?;
        net.validate()?;
        let network = NetworkSection {
            net,
            seed: s.u64("seed", 0)?,
            checkpoint: s.path("checkpoint", base),
            resume: s.bool("resume", false)?,
        };
        s.finish()?;

        let mut s = ini.take("training");
        let train = TrainConfig {
            epochs: s.usize("epochs", 50)?,
            batch_size: s.usize("batch_size", 4)?,
            learning_rate: s.f64("learning_rate", 3e-3)?,
            optimizer: Optimizer::parse(&s.string("optimizer", "adam"))?,
            seed: s.u64("seed", 0)?,
            ..TrainConfig::default()
        };
        train.validate()?;
        let weights = LossWeights {
            dirichlet: s.f64("dirichlet_weight", 1e3)?,
            inside: s.f64("inside_weight", 0.0)?,
            laplacian: s.f64("laplacian_weight", 1.0)?,
            neumann: s.f64("neumann_weight", 0.0)?,
        };
        weights.validate()?;
        let training = TrainingSection {
            train,
            weights,
            dataset: s.raw("dataset").map(|k| DatasetKind::parse(&k)).transpose()?,
        };
        s.finish()?;

        let mut s = ini.take("solve");
        let problem = match s.string("problem", "two_gaussians").as_str() {
            "two_gaussians" => Problem::TwoGaussians,
            "zero" => Problem::Zero,
            "file" => Problem::File(
                s.path("rhs", base)
                    .ok_or_else(|| CliError::Config("solve.problem = file needs solve.rhs".into()))?,
            ),
            p => return Err(s.err("problem", p, "two_gaussians, zero or file")),
        };
        let solve = SolveSection {
            problem,
            backend: s.string("backend", "cg"),
            rtol: s.f64("rtol", 1e-10)?,
            modes: s.usize("modes", 10)?,
            max_iter: s.usize("max_iter", 0)?,
        };
        s.finish()?;

        let mut s = ini.take("eval");
        let datasets = match s.raw("datasets") {
            None => dataset.kinds.clone(),
            Some(v) => split_list(&v).map(DatasetKind::parse).collect::<plasmanet_core::Result<_>>()?,
        };
        let sweep_modes = match s.raw("sweep_modes") {
            None => vec![(1, 1)],
            Some(v) => split_list(&v)
                .map(|m| parse_mode(m).ok_or_else(|| s.err("sweep_modes", &v, "a list of n:m pairs")))
                .collect::<Result<_>>()?,
        };
        let eval = EvalSection {
            datasets,
            backends: s.strings("backends", &["cg", "analytic", "network"]),
            split: s.string("split", "validation"),
            rtol: s.f64("rtol", 1e-10)?,
            modes: s.usize("modes", 20)?,
            resolutions: s.list("resolutions", vec![0.5, 1.0, 2.0], "a list of numbers")?,
            sweep_modes,
        };
        s.finish()?;

        let mut s = ini.take("oscillation");
        let d = OscillationConfig::default();
        let n = s.usize("n", d.grid.nx)?;
        let length = s.f64("length", d.grid.lx)?;
        let oscillation = OscillationConfig {
            grid: GridSpec::square(n, length)?,
            n0: s.f64("n0", d.n0)?,
            amplitude: s.f64("amplitude", d.amplitude)?,
            sigma: s.f64("sigma", d.sigma)?,
            t0: s.f64("t0", d.t0)?,
            periods: s.f64("periods", d.periods)?,
            dt: s.opt_f64("dt", d.dt)?,
            cfl: s.f64("cfl", d.cfl)?,
            steps_per_period: s.usize("steps_per_period", d.steps_per_period)?,
            probe_fraction: s.f64("probe_fraction", d.probe_fraction)?,
            snapshot_times: s.list("snapshot_times", d.snapshot_times, "a list of times")?,
            ..d
        };
        let oscillation_backend = SimBackend {
            backend: s.string("backend", "cg"),
            rtol: s.f64("rtol", 1e-10)?,
            modes: s.usize("modes", 20)?,
        };
        s.finish()?;

        let mut s = ini.take("streamer");
        let d = StreamerConfig::default();
        let streamer = StreamerConfig {
            grid: GridSpec::axisymmetric(
                s.usize("nx", d.grid.nx)?,
                s.usize("nr", d.grid.ny)?,
                s.f64("lx", d.grid.lx)?,
                s.f64("lr", d.grid.ly)?,
            )?,
            n0: s.f64("n0", d.n0)?,
            n_back: s.f64("n_back", d.n_back)?,
            x0: s.f64("x0", d.x0)?,
            sigma_x: s.f64("sigma_x", d.sigma_x)?,
            sigma_r: s.f64("sigma_r", d.sigma_r)?,
            ex: s.f64("ex", d.ex)?,
            dt: s.f64("dt", d.dt)?,
            steps: s.usize("steps", d.steps)?,
            sample_every: s.usize("sample_every", d.sample_every)?,
            snapshot_steps: s.list("snapshot_steps", d.snapshot_steps, "a list of step numbers")?,
            chemistry: d.chemistry,
        };
        let streamer_backend = SimBackend {
            backend: s.string("backend", "cg"),
            rtol: s.f64("rtol", 1e-10)?,
            modes: 0,
        };
        s.finish()?;

        let mut s = ini.take("bench");
        let bench = BenchSection {
            sizes: s.list("sizes", vec![17, 33, 49, 65], "a list of node counts")?,
            repetitions: s.usize("repetitions", 20)?,
            backends: s.strings("backends", &["jacobi", "cg", "network"]),
            rtol: s.f64("rtol", 1e-4)?,
        };
        if bench.repetitions == 0 || bench.sizes.is_empty() {
            return Err(CliError::Config("bench needs at least one size and one repetition".into()));
        }
        s.finish()?;

        let mut s = ini.take("rf");
        let rf = RfSection {
            n_p: s.usize("n_p", 0)?,
            probe_size: s.usize("probe_size", 0)?,
        };
        s.finish()?;

        Ok(Self {
            grid,
            dataset,
            network,
            training,
            solve,
            eval,
            oscillation,
            oscillation_backend,
            streamer,
            streamer_backend,
            bench,
            rf,
        })
    }

    /// Overrides every seed in the configuration.
    pub fn set_seed(&mut self, seed: u64) {
        self.dataset.seed = seed;
        self.network.seed = seed;
        self.training.train.seed = seed;
    }

    /// Canonical dump of the effective configuration; hashing this makes
    /// the provenance record independent of comments and key order.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let g = &self.grid;
        let _ = writeln!(
            s,
            "[grid]\nnx = {}\nny = {}\nlx = {:e}\nly = {:e}\ngeometry = {}\n",
            g.nx,
            g.ny,
            g.lx,
            g.ly,
            g.geometry.name()
        );
        let d = &self.dataset;
        let _ = writeln!(
            s,
            "[dataset]\nkinds = {}\ncount = {}\nseed = {}\ntrain_fraction = {}\nalpha = {}\ntarget_rtol = {}",
            fmt_list(&d.kinds.iter().map(|k| k.name()).collect::<Vec<_>>()),
            d.count,
            d.seed,
            d.train_fraction,
            d.alpha,
            d.target_rtol.map_or("none".into(), |r| format!("{r:e}")),
        );
        if let Some(p) = &d.dir {
            let _ = writeln!(s, "dir = {}", p.display());
        }
        let n = &self.network;
        let _ = writeln!(
            s,
            "\n[network]\narchitecture = {}\ndepths = {}\nkernel = {}\nwidth_ratios = {}\nbudget = {}\nbase_width = {}\nbias = {}\nseed = {}\nresume = {}",
            n.net.architecture.name(),
            fmt_list(&n.net.depths),
            n.net.kernel,
            fmt_list(&n.net.width_ratios),
            n.net.budget.map_or("none".into(), |b| b.to_string()),
            n.net.base_width,
            n.net.bias,
            n.seed,
            n.resume
        );
        if let Some(p) = &n.checkpoint {
            let _ = writeln!(s, "checkpoint = {}", p.display());
        }
        let t = &self.training;
        let _ = writeln!(
            s,
            "\n[training]\nepochs = {}\nbatch_size = {}\nlearning_rate = {:e}\noptimizer = {}\nseed = {}\ndirichlet_weight = {:e}\ninside_weight = {:e}\nlaplacian_weight = {:e}\nneumann_weight = {:e}",
            t.train.epochs,
            t.train.batch_size,
            t.train.learning_rate,
            t.train.optimizer.name(),
            t.train.seed,
            t.weights.dirichlet,
            t.weights.inside,
            t.weights.laplacian,
            t.weights.neumann
        );
        if let Some(k) = &t.dataset {
            let _ = writeln!(s, "dataset = {}", k.name());
        }
        let v = &self.solve;
        let problem = match &v.problem {
            Problem::TwoGaussians => "two_gaussians".to_string(),
            Problem::Zero => "zero".to_string(),
            Problem::File(p) => format!("file\nrhs = {}", p.display()),
        };
        let _ = writeln!(
            s,
            "\n[solve]\nproblem = {problem}\nbackend = {}\nrtol = {:e}\nmodes = {}\nmax_iter = {}",
            v.backend, v.rtol, v.modes, v.max_iter
        );
        let e = &self.eval;
        let _ = writeln!(
            s,
            "\n[eval]\ndatasets = {}\nbackends = {}\nsplit = {}\nrtol = {:e}\nmodes = {}\nresolutions = {}\nsweep_modes = {}",
            fmt_list(&e.datasets.iter().map(|k| k.name()).collect::<Vec<_>>()),
            e.backends.join(","),
            e.split,
            e.rtol,
            e.modes,
            fmt_list(&e.resolutions),
            fmt_list(&e.sweep_modes.iter().map(|(n, m)| format!("{n}:{m}")).collect::<Vec<_>>())
        );
        let o = &self.oscillation;
        let ob = &self.oscillation_backend;
        let _ = writeln!(
            s,
            "\n[oscillation]\nn = {}\nlength = {:e}\nn0 = {:e}\namplitude = {:e}\nsigma = {}\nt0 = {}\nperiods = {}\ndt = {}\ncfl = {}\nsteps_per_period = {}\nprobe_fraction = {}\nsnapshot_times = {}\nbackend = {}\nrtol = {:e}\nmodes = {}",
            o.grid.nx,
            o.grid.lx,
            o.n0,
            o.amplitude,
            o.sigma,
            o.t0,
            o.periods,
            o.dt.map_or("none".into(), |d| format!("{d:e}")),
            o.cfl,
            o.steps_per_period,
            o.probe_fraction,
            fmt_list(&o.snapshot_times),
            ob.backend,
            ob.rtol,
            ob.modes
        );
        let st = &self.streamer;
        let _ = writeln!(
            s,
            "\n[streamer]\nnx = {}\nnr = {}\nlx = {:e}\nlr = {:e}\nn0 = {:e}\nn_back = {:e}\nx0 = {:e}\nsigma_x = {:e}\nsigma_r = {:e}\nex = {:e}\ndt = {:e}\nsteps = {}\nsample_every = {}\nsnapshot_steps = {}\nbackend = {}\nrtol = {:e}",
            st.grid.nx,
            st.grid.ny,
            st.grid.lx,
            st.grid.ly,
            st.n0,
            st.n_back,
            st.x0,
            st.sigma_x,
            st.sigma_r,
            st.ex,
            st.dt,
            st.steps,
            st.sample_every,
            fmt_list(&st.snapshot_steps),
            self.streamer_backend.backend,
            self.streamer_backend.rtol
        );
        let b = &self.bench;
        let _ = writeln!(
            s,
            "\n[bench]\nsizes = {}\nrepetitions = {}\nbackends = {}\nrtol = {:e}",
            fmt_list(&b.sizes),
            b.repetitions,
            b.backends.join(","),
            b.rtol
        );
        let _ = writeln!(s, "\n[rf]\nn_p = {}\nprobe_size = {}", self.rf.n_p, self.rf.probe_size);
        s
    }
}
