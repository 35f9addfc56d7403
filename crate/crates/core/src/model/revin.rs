//! Per-window, per-channel z-scoring with statistics kept for the output.

use super::ModelError;
use crate::tensor::Tensor;

/// Lower bound on the per-window standard deviation.
pub const EPS_NORM: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct RevinStats {
    pub mean: Vec<f64>,
    /// Already floored at [`EPS_NORM`].
    pub std: Vec<f64>,
}

impl RevinStats {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Statistics of channel `c` in a row-major `[len, channels]` slice.
pub(crate) fn channel_stats(values: &[f64], channels: usize, c: usize) -> (f64, f64) {
    let len = values.len() / channels;
    let mean = (0..len).map(|t| values[t * channels + c]).sum::<f64>() / len as f64;
    let var = (0..len)
        .map(|t| (values[t * channels + c] - mean).powi(2))
        .sum::<f64>()
        / len as f64;
    (mean, var.sqrt().max(EPS_NORM))
}

/// Normalizes `x: [I, N]` channel by channel.
pub fn instance_normalize(x: &Tensor) -> Result<(Tensor, RevinStats), ModelError> {
    let &[len, channels] = x.shape() else {
        return Err(ModelError::Shape(format!(
            "instance_normalize expects [I, N], got {:?}",
            x.shape()
        )));
    };
    if len < 2 {
        return Err(ModelError::Shape(format!(
            "instance_normalize needs at least 2 steps, got {len}"
        )));
    }
    let (mean, std): (Vec<f64>, Vec<f64>) = (0..channels)
        .map(|c| channel_stats(x.data(), channels, c))
        .unzip();
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mean[i % channels]) / std[i % channels])
        .collect();
    Ok((Tensor::from_vec(x.shape(), data)?, RevinStats { mean, std }))
}

/// Inverse of [`instance_normalize`] for `y: [O, N]`.
pub fn instance_denormalize(y: &Tensor, stats: &RevinStats) -> Result<Tensor, ModelError> {
    let &[_, channels] = y.shape() else {
        return Err(ModelError::Shape(format!(
            "instance_denormalize expects [O, N], got {:?}",
            y.shape()
        )));
    };
    if channels != stats.channels() {
        return Err(ModelError::Shape(format!(
            "{} channels but stats for {}",
            channels,
            stats.channels()
        )));
    }
    let data = y
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| v * stats.std[i % channels] + stats.mean[i % channels])
        .collect();
    Ok(Tensor::from_vec(y.shape(), data)?)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(
            shape,
            (0..n).map(|_| rng.random_range(-50.0..80.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_mean_unit_std() {
        let x = random(&[96, 3], 1);
        let (z, _) = instance_normalize(&x).unwrap();
        for c in 0..3 {
            let (mean, std) = channel_stats(z.data(), 3, c);
            assert!(mean.abs() < 1e-9);
            assert!((std - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_channel() {
        let x = Tensor::full(&[10, 1], 5.0);
        let (z, stats) = instance_normalize(&x).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert_eq!(stats.std, [EPS_NORM]);
        assert_eq!(stats.mean, [5.0]);
    }

    #[test]
    fn round_trip() {
        let x = random(&[50, 4], 2);
        let (z, stats) = instance_normalize(&x).unwrap();
        let back = instance_denormalize(&z, &stats).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn denormalize_edge_cases() {
        let stats = RevinStats {
            mean: vec![1.0, -2.0],
            std: vec![3.0, 0.5],
        };
        let zero = Tensor::zeros(&[4, 2]);
        let y = instance_denormalize(&zero, &stats).unwrap();
        assert_eq!(&y.data()[..2], &[1.0, -2.0]);
        let x = random(&[4, 2], 3);
        assert_eq!(
            instance_denormalize(&x, &RevinStats::identity(2)).unwrap(),
            x
        );
        assert!(instance_denormalize(&Tensor::zeros(&[4, 3]), &stats).is_err());
        assert!(instance_normalize(&Tensor::zeros(&[1, 3])).is_err());
    }
}
