//! Configuration, provenance and command implementations behind the
//! `plasmanet` executable.

pub mod commands;
pub mod config;
pub mod provenance;

pub use commands::Context;
pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] plasmanet_core::Error),
    #[error(transparent)]
    Net(#[from] plasmanet_net::NetError),
    #[error(transparent)]
    Sim(#[from] plasmanet_sim::SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
