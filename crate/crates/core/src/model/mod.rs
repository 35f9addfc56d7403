//! The coarsening forecaster: instance normalization, token projection,
//! contextual sampling, per-branch predictors and the multi-scale merge.

mod blocks;
mod config;
mod cpnet;
mod revin;

pub use blocks::{Branch, ContextualSampling, MultiScaleMerge, SamplingTrace, TokenProjection};
pub use config::{
    apply_ablation, format_branches, parse_branches, Ablation, BranchConfig, BranchLengths,
    ModelConfig, MAX_EMBED_CHANNELS,
};
pub use cpnet::{CpNet, NormalizedBatch};
pub use revin::{instance_denormalize, instance_normalize, RevinStats, EPS_NORM};

pub(crate) use cpnet::transpose;

use thiserror::Error;

use crate::nn::NnError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Nn(#[from] NnError),
}
