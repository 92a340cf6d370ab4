//! Plasma simulations coupled to a Poisson backend: the 2D electron plasma
//! oscillation and the axisymmetric double-headed streamer.

pub mod backend;
pub mod oscillation;
pub mod streamer;

pub use backend::{PoissonBackend, PoissonSolver};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("time step {dt:e} s exceeds the stability limit {limit:e} s")]
    Cfl { dt: f64, limit: f64 },
    #[error("non-positive density {value:e} at node {index}")]
    NegativeDensity { index: usize, value: f64 },
    #[error("non-finite value at node {0}")]
    Blowup(usize),
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error(transparent)]
    Core(#[from] plasmanet_core::Error),
    #[error(transparent)]
    Net(#[from] plasmanet_net::NetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub(crate) fn at_step(self, step: usize) -> Self {
        SimError::Step {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
