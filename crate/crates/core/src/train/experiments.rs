use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    evaluate, train, PreparedData, RunReport, Scale, Split, Timings, TrainConfig, TrainError,
    TrainedModel,
};
use crate::data::{Dataset, SplitScheme};
use crate::model::{apply_ablation, format_branches, Ablation, BranchConfig, ModelConfig};

/// Ordered branch pool; the first `n` entries form the `n`-branch model.
pub const BRANCH_POOL: [(usize, usize); 4] = [(4, 2), (8, 4), (16, 8), (24, 12)];

pub fn branch_ladder(n: usize) -> Result<Vec<BranchConfig>, TrainError> {
    if n == 0 || n > BRANCH_POOL.len() {
        return Err(TrainError::InvalidConfig(format!(
            "branch count must be in 1..={}, got {n}",
            BRANCH_POOL.len()
        )));
    }
    Ok(BRANCH_POOL[..n]
        .iter()
        .map(|&(tl, sr)| BranchConfig::new(tl, sr))
        .collect())
}

/// Rayon pool for running independent trainings side by side. Its size is
/// read from `CPNET_THREADS`, falling back to rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool, TrainError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("CPNET_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| {
            TrainError::InvalidConfig(format!("CPNET_THREADS must be an integer, got `{v}`"))
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| TrainError::InvalidConfig(e.to_string()))
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub model: TrainedModel,
    pub report: RunReport,
    pub timings: Timings,
}

/// Prepares the data, trains, and evaluates on validation and test.
pub fn run_train(
    dataset: &Dataset,
    scheme: SplitScheme,
    config: &ModelConfig,
    tc: &TrainConfig,
) -> Result<RunOutcome, TrainError> {
    let started = Instant::now();
    config.validate()?;
    let data = PreparedData::new(dataset, scheme, config.lookback, config.horizon)?;
    let out = train(config, &data, tc)?;
    let report = RunReport {
        dataset: dataset.name.clone(),
        model: config.clone(),
        train: tc.clone(),
        param_count: out.model.params.scalar_count(),
        epochs: out.epochs,
        best_epoch: out.best_epoch,
        stopped_early: out.stopped_early,
        val: evaluate(&out.model, &data, Split::Val, Scale::Standardized)?,
        test: evaluate(&out.model, &data, Split::Test, Scale::Standardized)?,
        test_raw: evaluate(&out.model, &data, Split::Test, Scale::Raw)?,
    };
    Ok(RunOutcome {
        model: out.model,
        report,
        timings: Timings {
            total_seconds: started.elapsed().as_secs_f64(),
            epoch_seconds: out.epoch_seconds,
        },
    })
}

fn run_all(
    dataset: &Dataset,
    scheme: SplitScheme,
    configs: &[ModelConfig],
    tc: &TrainConfig,
) -> Result<Vec<RunOutcome>, TrainError> {
    let pool = thread_pool()?;
    pool.install(|| {
        configs
            .par_iter()
            .map(|c| run_train(dataset, scheme, c, tc))
            .collect()
    })
}

fn mean_epoch_seconds(t: &Timings) -> f64 {
    if t.epoch_seconds.is_empty() {
        0.0
    } else {
        t.epoch_seconds.iter().sum::<f64>() / t.epoch_seconds.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub mse: f64,
    pub mae: f64,
    /// Difference to the full model, when it is part of the run.
    pub delta_mse: Option<f64>,
    pub delta_mae: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub runs: Vec<RunReport>,
}

/// Trains each variant with identical seed and optimization settings.
pub fn run_ablation(
    dataset: &Dataset,
    scheme: SplitScheme,
    base: &ModelConfig,
    tc: &TrainConfig,
    variants: &[Ablation],
) -> Result<AblationReport, TrainError> {
    let configs: Vec<ModelConfig> = variants.iter().map(|&v| apply_ablation(base, v)).collect();
    let runs = run_all(dataset, scheme, &configs, tc)?;
    let full = variants
        .iter()
        .position(|&v| v == Ablation::Full)
        .map(|i| runs[i].report.test);
    let rows = variants
        .iter()
        .zip(&runs)
        .map(|(v, r)| AblationRow {
            variant: v.as_str().to_string(),
            mse: r.report.test.mse,
            mae: r.report.test.mae,
            delta_mse: full.map(|f| r.report.test.mse - f.mse),
            delta_mae: full.map(|f| r.report.test.mae - f.mae),
        })
        .collect();
    Ok(AblationReport {
        rows,
        runs: runs.into_iter().map(|r| r.report).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LookbackRow {
    pub lookback: usize,
    pub mse: f64,
    pub mae: f64,
    pub seconds_per_epoch: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LookbackSweepReport {
    pub rows: Vec<LookbackRow>,
    pub runs: Vec<RunReport>,
}

/// One model per look-back length; everything else fixed.
pub fn sweep_lookback(
    dataset: &Dataset,
    scheme: SplitScheme,
    base: &ModelConfig,
    tc: &TrainConfig,
    lookbacks: &[usize],
) -> Result<LookbackSweepReport, TrainError> {
    let configs: Vec<ModelConfig> = lookbacks
        .iter()
        .map(|&lookback| ModelConfig {
            lookback,
            ..base.clone()
        })
        .collect();
    let runs = run_all(dataset, scheme, &configs, tc)?;
    Ok(LookbackSweepReport {
        rows: runs
            .iter()
            .map(|r| LookbackRow {
                lookback: r.report.model.lookback,
                mse: r.report.test.mse,
                mae: r.report.test.mae,
                seconds_per_epoch: mean_epoch_seconds(&r.timings),
            })
            .collect(),
        runs: runs.into_iter().map(|r| r.report).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub branches: usize,
    pub branch_set: String,
    pub mse: f64,
    pub mae: f64,
    /// MSE reduction relative to the previous row.
    pub gain: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSweepReport {
    pub rows: Vec<BranchRow>,
    pub runs: Vec<RunReport>,
}

/// One model per branch count, using prefixes of [`BRANCH_POOL`].
pub fn sweep_branches(
    dataset: &Dataset,
    scheme: SplitScheme,
    base: &ModelConfig,
    tc: &TrainConfig,
    counts: &[usize],
) -> Result<BranchSweepReport, TrainError> {
    let configs = counts
        .iter()
        .map(|&n| {
            Ok(ModelConfig {
                branches: branch_ladder(n)?,
                ..base.clone()
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let runs = run_all(dataset, scheme, &configs, tc)?;
    let mut rows: Vec<BranchRow> = Vec::with_capacity(runs.len());
    for (n, r) in counts.iter().zip(&runs) {
        let gain = rows.last().map(|prev| prev.mse - r.report.test.mse);
        rows.push(BranchRow {
            branches: *n,
            branch_set: format_branches(&r.report.model.branches),
            mse: r.report.test.mse,
            mae: r.report.test.mae,
            gain,
        });
    }
    Ok(BranchSweepReport {
        rows,
        runs: runs.into_iter().map(|r| r.report).collect(),
    })
}
