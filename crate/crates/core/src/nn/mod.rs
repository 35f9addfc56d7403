//! Parameterized layers, initialization, the Adam optimizer and checkpoints.

mod adam;
pub mod checkpoint;
mod layers;
mod params;

pub use adam::{clip_global_norm, Adam, AdamConfig};
pub use layers::{Conv1dLayer, Conv2dLayer, Linear, Mlp2};
pub use params::{init_uniform, Forward, ParamId, ParamStore};

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("initialization needs a positive fan-in")]
    ZeroFanIn,
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),
    #[error("invalid layer configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
