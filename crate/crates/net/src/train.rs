//! Mini-batch training, scaled inference and the network predictor.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use plasmanet_core::analytic::resolution_ratio;
use plasmanet_core::dataset::{default_boundary, sample_metrics, DatasetManifest, Split};
use plasmanet_core::field::{gradient_to_efield, GridSpec, ScalarField, VectorField};
use plasmanet_core::linsolve::{PoissonOperator, Preconditioner};
use plasmanet_core::PoissonPredictor;

use crate::loss::{laplacian_stencil, loss_dirichlet, loss_inside, loss_laplacian_with, loss_neumann};
use crate::model::Network;
use crate::tensor::Tensor;
use crate::{NetError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub dirichlet: f64,
    pub inside: f64,
    pub laplacian: f64,
    pub neumann: f64,
}

impl LossWeights {
    pub fn laplacian_dirichlet() -> Self {
        Self {
            dirichlet: 1.0,
            inside: 0.0,
            laplacian: 1.0,
            neumann: 0.0,
        }
    }

    pub fn inside_dirichlet() -> Self {
        Self {
            dirichlet: 1.0,
            inside: 1.0,
            laplacian: 0.0,
            neumann: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.dirichlet, self.inside, self.laplacian, self.neumann];
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(NetError::Config("loss weights must be finite and non-negative".into()));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(NetError::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl Optimizer {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            o => Err(NetError::Config(format!("unknown optimizer '{o}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 8,
            learning_rate: 2e-4,
            optimizer: Optimizer::Adam,
            seed: 0,
            precision: Precision::F64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NetError::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(NetError::Config("learning rate must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub phi_l1: f64,
    pub e_l1: f64,
    pub e_linf: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss,phi_l1,E_l1,E_linf";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e}\n",
                r.epoch, r.train_loss, r.val_loss, r.phi_l1, r.e_l1, r.e_linf
            ));
        }
        s
    }

    pub fn first(&self) -> &EpochRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &EpochRecord {
        self.records.last().expect("history has the epoch-0 record")
    }
}

/// One charge density with an optional reference potential.
#[derive(Debug, Clone)]
pub struct Sample {
    pub rhs: ScalarField,
    pub target: Option<ScalarField>,
}

/// In-memory training and validation sets sharing one grid.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub grid: GridSpec,
    /// Multiplier applied to `R` before it enters the network.
    pub normalization: f64,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
}

impl TrainingData {
    /// Loads both splits; validation samples without stored targets are
    /// solved with `cg(1e-10)` so metrics can be recorded.
    pub fn from_manifest(m: &DatasetManifest) -> Result<Self> {
        let load = |split| -> Result<Vec<Sample>> {
            Ok(m.load_split(split)?
                .into_iter()
                .map(|(rhs, target)| Sample { rhs, target })
                .collect())
        };
        let mut data = Self {
            grid: m.grid,
            normalization: m.normalization,
            train: load(Split::Train)?,
            validation: load(Split::Validation)?,
        };
        data.solve_validation_targets()?;
        Ok(data)
    }

    pub fn solve_validation_targets(&mut self) -> Result<()> {
        let op = PoissonOperator::new(self.grid, &default_boundary(&self.grid))?;
        for s in self.validation.iter_mut().filter(|s| s.target.is_none()) {
            let (phi, _) = op.cg(&s.rhs, 1e-10, 20 * self.grid.len(), Preconditioner::Diagonal, None)?;
            s.target = Some(phi);
        }
        Ok(())
    }
}

struct Batch {
    input: Tensor,
    rhs: Tensor,
    target: Option<Tensor>,
}

fn make_batch(samples: &[&Sample], grid: &GridSpec, ratio: f64) -> Batch {
    let shape = [samples.len(), 1, grid.ny, grid.nx];
    let mut input = Tensor::zeros(shape);
    let mut rhs = Tensor::zeros(shape);
    let with_target = samples.iter().all(|s| s.target.is_some());
    let mut target = with_target.then(|| Tensor::zeros(shape));
    for (b, s) in samples.iter().enumerate() {
        rhs.sample_mut(b).copy_from_slice(&s.rhs.values);
        for (d, v) in input.sample_mut(b).iter_mut().zip(&s.rhs.values) {
            *d = v * ratio;
        }
        if let (Some(t), Some(st)) = (target.as_mut(), s.target.as_ref()) {
            t.sample_mut(b).copy_from_slice(&st.values);
        }
    }
    Batch { input, rhs, target }
}

struct Objective<'a> {
    grid: GridSpec,
    weights: LossWeights,
    stencil: &'a [(usize, Vec<(usize, f64)>)],
}

impl Objective<'_> {
    fn eval(&self, out: &Tensor, batch: &Batch, want_grad: bool) -> Result<(f64, Option<Tensor>)> {
        let w = self.weights;
        let mut total = 0.0;
        let mut grad = want_grad.then(|| Tensor::zeros(out.shape));
        let mut add = |(v, g): (f64, Tensor), weight: f64| {
            total += weight * v;
            if let Some(gr) = grad.as_mut() {
                for (a, b) in gr.data.iter_mut().zip(&g.data) {
                    *a += weight * b;
                }
            }
        };
        if w.dirichlet > 0.0 {
            add(loss_dirichlet(out, &self.grid)?, w.dirichlet);
        }
        if w.inside > 0.0 {
            let t = batch
                .target
                .as_ref()
                .ok_or_else(|| NetError::Config("inside loss requires target potentials".into()))?;
            add(loss_inside(out, t, &self.grid)?, w.inside);
        }
        if w.laplacian > 0.0 {
            add(loss_laplacian_with(out, &batch.rhs, &self.grid, self.stencil)?, w.laplacian);
        }
        if w.neumann > 0.0 {
            add(loss_neumann(out, &self.grid)?, w.neumann);
        }
        Ok((total, grad))
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mean loss and metrics of the network on a sample set.
fn evaluate_set(
    net: &Network,
    samples: &[Sample],
    obj: &Objective,
    ratio: f64,
    batch_size: usize,
) -> Result<(f64, [f64; 3])> {
    if samples.is_empty() {
        return Ok((f64::NAN, [f64::NAN; 3]));
    }
    let mut loss = 0.0;
    let mut metrics = [0.0; 3];
    let mut n_metrics = 0;
    for chunk in samples.chunks(batch_size) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let batch = make_batch(&refs, &obj.grid, ratio);
        let out = net.predict(&batch.input)?;
        loss += obj.eval(&out, &batch, false)?.0 * chunk.len() as f64;
        for (b, s) in chunk.iter().enumerate() {
            if let Some(t) = &s.target {
                let pred = ScalarField {
                    grid: obj.grid,
                    values: out.sample(b).to_vec(),
                };
                let m = sample_metrics(&pred, t)?;
                for c in 0..3 {
                    metrics[c] += m[c];
                }
                n_metrics += 1;
            }
        }
    }
    let metrics = if n_metrics == 0 {
        [f64::NAN; 3]
    } else {
        metrics.map(|v| v / n_metrics as f64)
    };
    Ok((loss / samples.len() as f64, metrics))
}

pub fn train(
    network: Network,
    manifest: &DatasetManifest,
    weights: LossWeights,
    config: &TrainConfig,
) -> Result<(Network, History)> {
    let data = TrainingData::from_manifest(manifest)?;
    train_on(network, &data, weights, config)
}

pub fn train_on(
    mut network: Network,
    data: &TrainingData,
    weights: LossWeights,
    config: &TrainConfig,
) -> Result<(Network, History)> {
    let history = train_with_callback(&mut network, data, weights, config, |_| {})?;
    Ok((network, history))
}

/// Trains in place, calling `on_epoch` after every recorded epoch.
pub fn train_with_callback(
    network: &mut Network,
    data: &TrainingData,
    weights: LossWeights,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<History> {
    weights.validate()?;
    config.validate()?;
    if data.train.is_empty() {
        return Err(NetError::Config("training set is empty".into()));
    }
    if weights.inside > 0.0 && data.train.iter().any(|s| s.target.is_none()) {
        return Err(NetError::Config("inside loss requires a dataset with target potentials".into()));
    }
    let grid = data.grid;
    if data.train.iter().chain(&data.validation).any(|s| s.rhs.grid != grid) {
        return Err(NetError::Shape("samples do not share the training grid".into()));
    }
    let stencil = laplacian_stencil(&grid);
    let obj = Objective {
        grid,
        weights,
        stencil: &stencil,
    };
    let ratio = data.normalization;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(network.n_params());
    let mut grads = vec![0.0; network.n_params()];
    let mut history = History::default();

    let (train0, _) = evaluate_set(network, &data.train, &obj, ratio, config.batch_size)?;
    let (val0, m0) = evaluate_set(network, &data.validation, &obj, ratio, config.batch_size)?;
    let rec = EpochRecord {
        epoch: 0,
        train_loss: train0,
        val_loss: val0,
        phi_l1: m0[0],
        e_l1: m0[1],
        e_linf: m0[2],
    };
    on_epoch(&rec);
    history.records.push(rec);

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut running = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let refs: Vec<&Sample> = chunk.iter().map(|i| &data.train[*i]).collect();
            let batch = make_batch(&refs, &grid, ratio);
            let tape = network.forward(&batch.input)?;
            let (loss, g) = obj.eval(tape.output(), &batch, true)?;
            if !loss.is_finite() {
                return Err(NetError::Diverged(format!("loss became {loss} in epoch {epoch}")));
            }
            running += loss * chunk.len() as f64;
            grads.fill(0.0);
            network.backward(&tape, &g.expect("gradient requested"), &mut grads, false)?;
            match config.optimizer {
                Optimizer::Adam => adam.step(&mut network.params, &grads, config.learning_rate),
                Optimizer::Sgd => {
                    for (p, g) in network.params.iter_mut().zip(&grads) {
                        *p -= config.learning_rate * g;
                    }
                }
            }
        }
        let (val, m) = evaluate_set(network, &data.validation, &obj, ratio, config.batch_size)?;
        let rec = EpochRecord {
            epoch,
            train_loss: running / data.train.len() as f64,
            val_loss: val,
            phi_l1: m[0],
            e_l1: m[1],
            e_linf: m[2],
        };
        on_epoch(&rec);
        history.records.push(rec);
    }
    Ok(history)
}

/// Network output for a physical charge density, in volts, rescaled from
/// the training spacing `delta_nn` to the spacing of `rhs`.
pub fn infer(
    network: &Network,
    rhs: &ScalarField,
    normalization: f64,
    delta_nn: f64,
) -> Result<(ScalarField, VectorField)> {
    let grid = rhs.grid;
    let scale = resolution_ratio(grid.dx(), delta_nn)?;
    let x = Tensor::from_vec(
        [1, 1, grid.ny, grid.nx],
        rhs.values.iter().map(|v| v * normalization).collect(),
    )?;
    let out = network.predict(&x)?;
    let phi = ScalarField {
        grid,
        values: out.data.iter().map(|v| v * scale).collect(),
    };
    let e = gradient_to_efield(&phi);
    Ok((phi, e))
}

/// A trained network together with the scaling it was trained under.
#[derive(Debug, Clone)]
pub struct NetPredictor {
    pub network: Network,
    pub normalization: f64,
    pub delta_nn: f64,
    pub label: String,
}

impl PoissonPredictor for NetPredictor {
    fn predict(&self, rhs: &ScalarField) -> plasmanet_core::Result<ScalarField> {
        infer(&self.network, rhs, self.normalization, self.delta_nn)
            .map(|(phi, _)| phi)
            .map_err(|e| plasmanet_core::Error::InvalidArgument(e.to_string()))
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}
