use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::revin::{channel_stats, instance_denormalize, instance_normalize};
use super::{Branch, ModelConfig, ModelError, MultiScaleMerge};
use crate::nn::{Forward, ParamStore};
use crate::tensor::{Graph, Tensor, Var};

/// A batch of instance-normalized look-back windows.
///
/// `x` is `[B, N, I]` (one row per window and variate); `mean` and `std`
/// are `[B, N, 1]`.
#[derive(Clone, Debug)]
pub struct NormalizedBatch {
    pub x: Tensor,
    pub mean: Tensor,
    pub std: Tensor,
}

impl NormalizedBatch {
    /// `windows` are row-major `[I, N]` slices.
    pub fn from_windows(windows: &[&[f64]], channels: usize) -> Result<Self, ModelError> {
        let batch = windows.len();
        let len = windows
            .first()
            .map(|w| w.len() / channels)
            .ok_or_else(|| ModelError::Shape("empty batch".into()))?;
        if len < 2 {
            return Err(ModelError::Shape(format!(
                "windows need at least 2 steps, got {len}"
            )));
        }
        let mut x = Vec::with_capacity(batch * channels * len);
        let mut mean = Vec::with_capacity(batch * channels);
        let mut std = Vec::with_capacity(batch * channels);
        for w in windows {
            if w.len() != len * channels {
                return Err(ModelError::Shape("windows differ in length".into()));
            }
            for c in 0..channels {
                let (m, s) = channel_stats(w, channels, c);
                x.extend((0..len).map(|t| (w[t * channels + c] - m) / s));
                mean.push(m);
                std.push(s);
            }
        }
        Ok(Self {
            x: Tensor::from_vec(&[batch, channels, len], x)?,
            mean: Tensor::from_vec(&[batch, channels, 1], mean)?,
            std: Tensor::from_vec(&[batch, channels, 1], std)?,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.x.shape()[1]
    }

    /// Normalizes row-major `[O, N]` targets with each window's input
    /// statistics, giving `[B, N, O]`.
    pub fn normalize_targets(&self, targets: &[&[f64]]) -> Result<Tensor, ModelError> {
        let (batch, channels) = (self.batch_size(), self.channels());
        if targets.len() != batch {
            return Err(ModelError::Shape(format!(
                "{} targets for {batch} windows",
                targets.len()
            )));
        }
        let horizon = targets[0].len() / channels;
        let mut out = Vec::with_capacity(batch * channels * horizon);
        for (b, y) in targets.iter().enumerate() {
            if y.len() != horizon * channels {
                return Err(ModelError::Shape("targets differ in length".into()));
            }
            for c in 0..channels {
                let (m, s) = (
                    self.mean.data()[b * channels + c],
                    self.std.data()[b * channels + c],
                );
                out.extend((0..horizon).map(|t| (y[t * channels + c] - m) / s));
            }
        }
        Ok(Tensor::from_vec(&[batch, channels, horizon], out)?)
    }
}

/// Transposes the trailing two axes of a row-major `[rows, cols]` block.
pub(crate) fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Multi-branch coarsening network.
///
/// Every variate is processed as an independent univariate series through
/// the same weights.
#[derive(Clone, Debug)]
pub struct CpNet {
    config: ModelConfig,
    branches: Vec<Branch>,
    merge: MultiScaleMerge,
}

impl CpNet {
    /// Builds the network and initializes its parameters from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<(Self, ParamStore), ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let branches = config
            .branches
            .iter()
            .enumerate()
            .map(|(i, b)| Branch::new(&mut store, i, &config, b, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        let merge = MultiScaleMerge::new(&mut store, branches.len(), &mut rng)?;
        Ok((
            Self {
                config,
                branches,
                merge,
            },
            store,
        ))
    }

    /// Builds the network around existing parameters, e.g. from a
    /// checkpoint. Names and shapes must match the configuration.
    pub fn with_params(
        config: ModelConfig,
        params: &ParamStore,
    ) -> Result<(Self, ParamStore), ModelError> {
        let (net, mut store) = Self::new(config, 0)?;
        store.copy_from(params)?;
        Ok((net, store))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn merge(&self) -> &MultiScaleMerge {
        &self.merge
    }

    /// `[B, N, I]` normalized input -> `[B, N, O]` normalized prediction.
    pub fn forward_normalized(&self, f: &Forward<'_>, x: Var) -> Result<Var, ModelError> {
        let g = f.graph();
        let &[batch, channels, len] = g.shape(x).as_slice() else {
            return Err(ModelError::Shape(format!(
                "expected [B, N, I], got {:?}",
                g.shape(x)
            )));
        };
        if len != self.config.lookback {
            return Err(ModelError::Shape(format!(
                "look-back length {len} does not match configured {}",
                self.config.lookback
            )));
        }
        let rows = g.reshape(x, &[batch * channels, 1, len])?;
        let context = self.config.lookback + self.config.horizon;
        let outputs = self
            .branches
            .iter()
            .map(|branch| {
                let y = branch.forward(f, rows)?;
                Ok(g.reshape(y, &[batch, channels, context])?)
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        self.merge.forward(f, &outputs, self.config.horizon)
    }

    /// Full forward including denormalization; `[B, N, O]`.
    pub fn forward(&self, f: &Forward<'_>, batch: &NormalizedBatch) -> Result<Var, ModelError> {
        let g = f.graph();
        let x = g.constant(batch.x.clone());
        let y = self.forward_normalized(f, x)?;
        let scaled = g.mul(y, g.constant(batch.std.clone()))?;
        Ok(g.add(scaled, g.constant(batch.mean.clone()))?)
    }

    /// Forecast for one window `x: [I, N]`, returned as `[O, N]`.
    pub fn predict(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor, ModelError> {
        let &[len, channels] = x.shape() else {
            return Err(ModelError::Shape(format!(
                "expected [I, N], got {:?}",
                x.shape()
            )));
        };
        let (normalized, stats) = instance_normalize(x)?;
        let rows = Tensor::from_vec(
            &[1, channels, len],
            transpose(normalized.data(), len, channels),
        )?;
        let g = Graph::new();
        let f = Forward::inference(&g, params);
        let y = self.forward_normalized(&f, g.constant(rows))?;
        let horizon = self.config.horizon;
        let y = Tensor::from_vec(
            &[horizon, channels],
            transpose(g.value(y).data(), channels, horizon),
        )?;
        instance_denormalize(&y, &stats)
    }

    /// Forecasts for many windows at once. Each window is a row-major
    /// `[I, N]` slice; the result holds one row-major `[O, N]` block per
    /// window.
    pub fn predict_windows(
        &self,
        params: &ParamStore,
        windows: &[&[f64]],
        channels: usize,
    ) -> Result<Vec<f64>, ModelError> {
        let batch = NormalizedBatch::from_windows(windows, channels)?;
        let g = Graph::new();
        let f = Forward::inference(&g, params);
        let y = self.forward(&f, &batch)?;
        let horizon = self.config.horizon;
        let value = g.value(y);
        Ok(value
            .data()
            .chunks_exact(channels * horizon)
            .flat_map(|block| transpose(block, channels, horizon))
            .collect())
    }
}
