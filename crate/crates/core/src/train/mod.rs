//! Training loop, metrics, and the experiment runners (ablation, look-back
//! and branch sweeps, runtime benchmark) with their reports.

mod bench;
mod config;
mod experiments;
mod metrics;
mod prepared;
mod report;
mod trainer;

pub use bench::{benchmark_runtime, linear_fit, BenchConfig, BenchReport, BenchRow, LinearFit};
pub use config::TrainConfig;
pub use experiments::{
    branch_ladder, run_ablation, run_train, sweep_branches, sweep_lookback, thread_pool,
    AblationReport, AblationRow, BranchRow, BranchSweepReport, LookbackRow, LookbackSweepReport,
    RunOutcome, BRANCH_POOL,
};
pub use metrics::{Metrics, MetricsAccumulator};
pub use prepared::{PreparedData, Split};
pub use report::{load_checkpoint, read_json, save_checkpoint, write_csv, write_json, Timings};
pub use trainer::{
    evaluate, target_tensor, train, train_step, EpochLog, RunReport, Scale, TrainOutput,
    TrainedModel,
};

use thiserror::Error;

use crate::data::DataError;
use crate::model::ModelError;
use crate::nn::NnError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },
    #[error("{0} split has no windows")]
    EmptySplit(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("report format: {0}")]
    Format(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
