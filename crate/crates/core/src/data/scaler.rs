use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::DataError;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-column z-scoring with statistics from the training rows only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at [`STD_FLOOR`].
    pub std: Vec<f64>,
}

impl Scaler {
    /// Fits on rows `train` of a row-major `[T, N]` table.
    pub fn fit(values: &[f64], channels: usize, train: Range<usize>) -> Result<Self, DataError> {
        if train.is_empty() || train.end * channels > values.len() {
            return Err(DataError::Shape(format!(
                "cannot fit scaler on rows {train:?} of a {}-row table",
                values.len() / channels.max(1)
            )));
        }
        let n = train.len() as f64;
        let rows = &values[train.start * channels..train.end * channels];
        let mut mean = vec![0.0; channels];
        for row in rows.chunks_exact(channels) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; channels];
        for row in rows.chunks_exact(channels) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let n = self.channels();
        values
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % n]) / self.std[i % n])
            .collect()
    }

    pub fn invert(&self, values: &[f64]) -> Vec<f64> {
        let n = self.channels();
        values
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.std[i % n] + self.mean[i % n])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_mean() {
        let ramp: Vec<f64> = (0..100).map(f64::from).collect();
        let s = Scaler::fit(&ramp, 1, 0..100).unwrap();
        assert_eq!(s.mean, vec![49.5]);
        assert!((s.std[0] - (9999.0f64 / 12.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_column_scales_to_zero() {
        let v = vec![3.0, 1.0, 3.0, 2.0, 3.0, 3.0];
        let s = Scaler::fit(&v, 2, 0..3).unwrap();
        assert_eq!(s.std[0], STD_FLOOR);
        let z = s.apply(&v);
        assert!(z.iter().step_by(2).all(|&x| x == 0.0));
    }

    #[test]
    fn fit_uses_train_rows_only() {
        let mut v: Vec<f64> = (0..10).map(f64::from).collect();
        let a = Scaler::fit(&v, 1, 0..5).unwrap();
        v[7] = 1e6;
        assert_eq!(a, Scaler::fit(&v, 1, 0..5).unwrap());
    }

    #[test]
    fn empty_train_rejected() {
        assert!(Scaler::fit(&[1.0, 2.0], 1, 0..0).is_err());
        assert!(Scaler::fit(&[1.0, 2.0], 1, 0..3).is_err());
    }
}
