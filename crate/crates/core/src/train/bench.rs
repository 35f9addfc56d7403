use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{train_step, TrainConfig, TrainError};
use crate::data::{synth_generate, windows, SeriesWindow, SynthSpec};
use crate::model::{CpNet, ModelConfig};
use crate::nn::{Adam, AdamConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub lookbacks: Vec<usize>,
    /// Architecture apart from the look-back length.
    pub model: ModelConfig,
    pub batch_size: usize,
    pub channels: usize,
    pub warmup: usize,
    pub steps: usize,
    /// Windows in the timed full epoch.
    pub epoch_windows: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            lookbacks: vec![96, 192, 384, 768],
            model: ModelConfig::default(),
            batch_size: 32,
            channels: 1,
            warmup: 3,
            steps: 20,
            epoch_windows: 256,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub lookback: usize,
    /// Median forward+backward+update time of one step.
    pub step_seconds: f64,
    pub step_seconds_min: f64,
    pub step_seconds_max: f64,
    /// Median forward-only time for one batch.
    pub infer_seconds: f64,
    pub epoch_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
    /// Least-squares fit of median step time against look-back length.
    pub fit: Option<LinearFit>,
    /// Step time at the largest look-back over the smallest.
    pub ratio: Option<f64>,
}

/// Ordinary least squares `y = slope * x + intercept`. Needs two distinct
/// `x` values.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn bench_one(cfg: &BenchConfig, lookback: usize) -> Result<BenchRow, TrainError> {
    let model = ModelConfig {
        lookback,
        ..cfg.model.clone()
    };
    let windows_needed = cfg.epoch_windows.max(cfg.batch_size);
    let horizon = model.horizon;
    let ds = synth_generate(&SynthSpec {
        length: lookback + horizon + windows_needed - 1,
        channels: cfg.channels,
        seed: cfg.seed,
        ..SynthSpec::default()
    })?;
    let ws = windows(&ds.values, cfg.channels, 0..ds.len(), lookback, horizon, 1)?;
    let (net, mut params) = CpNet::new(model, cfg.seed)?;
    let mut adam = Adam::new(AdamConfig::default(), &params)?;
    let batch: &[SeriesWindow<'_>] = &ws[..cfg.batch_size];
    let tc = TrainConfig {
        seed: cfg.seed,
        ..TrainConfig::default()
    };

    for _ in 0..cfg.warmup {
        train_step(&net, &mut params, &mut adam, batch, cfg.channels, &tc, 0)?;
    }
    let mut steps = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let t = Instant::now();
        train_step(&net, &mut params, &mut adam, batch, cfg.channels, &tc, 0)?;
        steps.push(t.elapsed().as_secs_f64());
    }
    let xs: Vec<&[f64]> = batch.iter().map(|w| w.x).collect();
    let mut infer = Vec::with_capacity(cfg.steps);
    for i in 0..cfg.warmup + cfg.steps {
        let t = Instant::now();
        net.predict_windows(&params, &xs, cfg.channels)?;
        if i >= cfg.warmup {
            infer.push(t.elapsed().as_secs_f64());
        }
    }
    let t = Instant::now();
    for chunk in ws.chunks(cfg.batch_size) {
        train_step(&net, &mut params, &mut adam, chunk, cfg.channels, &tc, 0)?;
    }
    let epoch_seconds = t.elapsed().as_secs_f64();

    let step_seconds_min = steps.iter().copied().fold(f64::INFINITY, f64::min);
    let step_seconds_max = steps.iter().copied().fold(0.0, f64::max);
    Ok(BenchRow {
        lookback,
        step_seconds: median(&mut steps),
        step_seconds_min,
        step_seconds_max,
        infer_seconds: median(&mut infer),
        epoch_seconds,
    })
}

/// Times training steps for each look-back length on synthetic data.
/// The first `warmup` steps are discarded; the reported step time is the
/// median of the next `steps`.
pub fn benchmark_runtime(cfg: &BenchConfig) -> Result<BenchReport, TrainError> {
    if cfg.steps == 0 || cfg.batch_size == 0 {
        return Err(TrainError::InvalidConfig(
            "bench needs steps >= 1 and batch_size >= 1".into(),
        ));
    }
    let rows = cfg
        .lookbacks
        .iter()
        .map(|&i| bench_one(cfg, i))
        .collect::<Result<Vec<_>, _>>()?;
    let x: Vec<f64> = rows.iter().map(|r| r.lookback as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.step_seconds).collect();
    let ratio = match (
        rows.iter().min_by_key(|r| r.lookback),
        rows.iter().max_by_key(|r| r.lookback),
    ) {
        (Some(lo), Some(hi)) if rows.len() > 1 => Some(hi.step_seconds / lo.step_seconds),
        _ => None,
    };
    Ok(BenchReport {
        config: cfg.clone(),
        fit: linear_fit(&x, &y),
        rows,
        ratio,
    })
}
