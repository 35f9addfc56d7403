use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Metrics, MetricsAccumulator, PreparedData, Split, TrainConfig, TrainError};
use crate::data::SeriesWindow;
use crate::model::{transpose, CpNet, ModelConfig, ModelError, NormalizedBatch};
use crate::nn::{clip_global_norm, Adam, AdamConfig, Forward, NnError, ParamStore};
use crate::tensor::{Graph, Tensor, TensorError};

/// Windows per forward pass during evaluation.
const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub net: CpNet,
    pub params: ParamStore,
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutput {
    /// Parameters of the best validation epoch.
    pub model: TrainedModel,
    pub epochs: Vec<EpochLog>,
    /// 1-based; 0 when no epoch ran.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub epoch_seconds: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Point-weighted mean of the batch losses.
    pub train_loss: f64,
    pub val_mse: f64,
}

/// Everything one training run reports, apart from wall-clock timings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub param_count: usize,
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept; 0 if none ran.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub val: Metrics,
    pub test: Metrics,
    /// Test metrics after undoing the dataset standardization.
    pub test_raw: Metrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    /// Values as standardized with the training statistics.
    Standardized,
    /// Original units.
    Raw,
}

/// Row-major `[O, N]` targets stacked into `[B, N, O]`.
pub fn target_tensor(targets: &[&[f64]], channels: usize) -> Result<Tensor, TensorError> {
    let horizon = targets.first().map_or(0, |y| y.len() / channels);
    let data = targets
        .iter()
        .flat_map(|y| transpose(y, horizon, channels))
        .collect();
    Tensor::from_vec(&[targets.len(), channels, horizon], data)
}

fn diverged(epoch: usize, step: usize, detail: impl ToString) -> TrainError {
    TrainError::Diverged {
        epoch,
        step,
        detail: detail.to_string(),
    }
}

/// One optimizer step on a mini-batch; returns the batch loss before the
/// update. `step` seeds the dropout masks.
pub fn train_step(
    net: &CpNet,
    params: &mut ParamStore,
    adam: &mut Adam,
    batch: &[SeriesWindow<'_>],
    channels: usize,
    tc: &TrainConfig,
    step: u64,
) -> Result<f64, TrainError> {
    let xs: Vec<&[f64]> = batch.iter().map(|w| w.x).collect();
    let ys: Vec<&[f64]> = batch.iter().map(|w| w.y).collect();
    let normalized = NormalizedBatch::from_windows(&xs, channels)?;
    let g = Graph::new();
    let mask_seed = tc.seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let f = Forward::training(&g, params).with_dropout(tc.dropout, mask_seed);
    let pred = net.forward(&f, &normalized)?;
    let target = g.constant(target_tensor(&ys, channels)?);
    let loss = g.mse(pred, target)?;
    let value = g.value(loss).data()[0];
    let mut grads = g.backward(loss)?;
    let mut grads = f.gradients(&mut grads, params);
    if let Some(max) = tc.grad_clip {
        clip_global_norm(&mut grads, max);
    }
    adam.step(params, &grads)?;
    Ok(value)
}

fn is_divergence(e: &TrainError) -> bool {
    matches!(
        e,
        TrainError::Tensor(TensorError::NonFinite { .. })
            | TrainError::Model(ModelError::Tensor(TensorError::NonFinite { .. }))
            | TrainError::Nn(NnError::NonFiniteGradient(_))
    )
}

/// Trains with Adam on shuffled mini-batches and early stopping on
/// validation MSE. The returned parameters are those of the best
/// validation epoch.
pub fn train(
    config: &ModelConfig,
    data: &PreparedData,
    tc: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    tc.validate()?;
    if (config.lookback, config.horizon) != (data.lookback, data.horizon) {
        return Err(TrainError::InvalidConfig(format!(
            "model expects I={} O={} but data was prepared for I={} O={}",
            config.lookback, config.horizon, data.lookback, data.horizon
        )));
    }
    let (net, mut params) = CpNet::new(config.clone(), tc.seed)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: tc.lr,
            weight_decay: tc.weight_decay,
            ..AdamConfig::default()
        },
        &params,
    )?;
    let train_windows = data.windows(Split::Train)?;
    let val_windows = data.windows(Split::Val)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_windows.len()).collect();

    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut seconds = Vec::new();
    let mut stopped_early = false;
    let mut step = 0usize;
    for epoch in 1..=tc.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            step += 1;
            let batch: Vec<SeriesWindow<'_>> = chunk.iter().map(|&i| train_windows[i]).collect();
            let loss = train_step(
                &net,
                &mut params,
                &mut adam,
                &batch,
                data.channels,
                tc,
                step as u64,
            )
            .map_err(|e| {
                if is_divergence(&e) {
                    diverged(epoch, step, e)
                } else {
                    e
                }
            })?;
            if !loss.is_finite() {
                return Err(diverged(epoch, step, format!("loss {loss}")));
            }
            weighted += loss * chunk.len() as f64;
        }
        let train_loss = weighted / train_windows.len() as f64;
        let val_mse = metrics_over(&net, &params, &val_windows, data, Scale::Standardized)?.mse;
        if !val_mse.is_finite() {
            return Err(diverged(epoch, step, format!("validation MSE {val_mse}")));
        }
        history.push(EpochLog {
            epoch,
            train_loss,
            val_mse,
        });
        seconds.push(started.elapsed().as_secs_f64());
        if best.as_ref().is_none_or(|(b, _, _)| val_mse < *b) {
            best = Some((val_mse, epoch, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tc.patience {
                stopped_early = epoch < tc.max_epochs;
                break;
            }
        }
    }
    let best_epoch = match best {
        Some((_, epoch, kept)) => {
            params = kept;
            epoch
        }
        None => 0,
    };
    Ok(TrainOutput {
        model: TrainedModel { net, params },
        epochs: history,
        best_epoch,
        stopped_early,
        epoch_seconds: seconds,
    })
}

fn metrics_over(
    net: &CpNet,
    params: &ParamStore,
    windows: &[SeriesWindow<'_>],
    data: &PreparedData,
    scale: Scale,
) -> Result<Metrics, TrainError> {
    if windows.is_empty() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    let mut acc = MetricsAccumulator::default();
    for chunk in windows.chunks(EVAL_CHUNK) {
        let xs: Vec<&[f64]> = chunk.iter().map(|w| w.x).collect();
        let pred = net.predict_windows(params, &xs, data.channels)?;
        let target: Vec<f64> = chunk.iter().flat_map(|w| w.y.iter().copied()).collect();
        match scale {
            Scale::Standardized => acc.push(&pred, &target),
            Scale::Raw => acc.push(&data.scaler.invert(&pred), &data.scaler.invert(&target)),
        }
    }
    Ok(acc.finish())
}

/// MSE and MAE over every stride-1 window of a split.
pub fn evaluate(
    model: &TrainedModel,
    data: &PreparedData,
    split: Split,
    scale: Scale,
) -> Result<Metrics, TrainError> {
    let windows = data.windows(split)?;
    metrics_over(&model.net, &model.params, &windows, data, scale)
}
