use serde::{Deserialize, Serialize};

use super::TrainError;

/// Optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Inverted-dropout rate inside every 2-layer perceptron; 0 disables.
    pub dropout: f64,
    /// L2 penalty added to the gradients.
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seed: 42,
            grad_clip: None,
            dropout: 0.0,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 8] = [
        "lr",
        "batch_size",
        "max_epochs",
        "patience",
        "seed",
        "grad_clip",
        "dropout",
        "weight_decay",
    ];

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        if self.batch_size < 1 {
            return fail("batch_size must be >= 1".into());
        }
        if self.patience < 1 {
            return fail("patience must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            ));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return fail(format!("grad_clip must be positive, got {c}"));
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        let bad = |what: &str| {
            TrainError::InvalidConfig(format!("`{key}` expects {what}, got `{value}`"))
        };
        match key {
            "lr" => self.lr = value.parse().map_err(|_| bad("a number"))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad("an integer"))?,
            "max_epochs" => self.max_epochs = value.parse().map_err(|_| bad("an integer"))?,
            "patience" => self.patience = value.parse().map_err(|_| bad("an integer"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("an integer"))?,
            "grad_clip" => {
                self.grad_clip = match value {
                    "off" | "none" => None,
                    v => Some(v.parse().map_err(|_| bad("a number or `off`"))?),
                }
            }
            "dropout" => self.dropout = value.parse().map_err(|_| bad("a number"))?,
            "weight_decay" => self.weight_decay = value.parse().map_err(|_| bad("a number"))?,
            _ => {
                return Err(TrainError::InvalidConfig(format!(
                    "unknown training key `{key}`"
                )))
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let clip = self
            .grad_clip
            .map_or("off".to_string(), |c| format!("{c:?}"));
        format!(
            "lr={:?}\nbatch_size={}\nmax_epochs={}\npatience={}\nseed={}\ngrad_clip={clip}\ndropout={:?}\nweight_decay={:?}\n",
            self.lr,
            self.batch_size,
            self.max_epochs,
            self.patience,
            self.seed,
            self.dropout,
            self.weight_decay
        )
    }
}
