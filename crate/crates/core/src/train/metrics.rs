use serde::{Deserialize, Serialize};

/// Mean squared and absolute error over every (window, step, variate)
/// triple.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub n_points: usize,
}

impl Metrics {
    pub fn between(pred: &[f64], target: &[f64]) -> Self {
        let mut acc = MetricsAccumulator::default();
        acc.push(pred, target);
        acc.finish()
    }
}

/// Running sums in push order.
#[derive(Clone, Debug, Default)]
pub struct MetricsAccumulator {
    sq: f64,
    abs: f64,
    n: usize,
}

impl MetricsAccumulator {
    pub fn push(&mut self, pred: &[f64], target: &[f64]) {
        assert_eq!(
            pred.len(),
            target.len(),
            "prediction/target length mismatch"
        );
        for (p, t) in pred.iter().zip(target) {
            let d = p - t;
            self.sq += d * d;
            self.abs += d.abs();
        }
        self.n += pred.len();
    }

    pub fn finish(&self) -> Metrics {
        if self.n == 0 {
            return Metrics::default();
        }
        Metrics {
            mse: self.sq / self.n as f64,
            mae: self.abs / self.n as f64,
            n_points: self.n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let y = [1.0, -2.0, 3.5];
        assert_eq!(
            Metrics::between(&y, &y),
            Metrics {
                mse: 0.0,
                mae: 0.0,
                n_points: 3
            }
        );
    }

    #[test]
    fn small_case() {
        let m = Metrics::between(&[1.0, 2.0], &[0.0, 4.0]);
        assert_eq!((m.mse, m.mae), (2.5, 1.5));
    }
}
