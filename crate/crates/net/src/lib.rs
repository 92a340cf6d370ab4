//! Convolutional Poisson surrogates: a small tensor kernel with hand-written
//! backward passes, UNet and MSNet builders, receptive-field calculus, the
//! training losses and the training loop.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod model;
pub mod rf;
pub mod tensor;
pub mod train;

pub use model::{Architecture, NetConfig, Network};
pub use tensor::Tensor;
pub use train::{infer, train, train_on, LossWeights, NetPredictor, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Core(#[from] plasmanet_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;
