use super::{NnError, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient. Off by default.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Result<Self, NnError> {
        if !(config.lr >= 0.0 && config.lr.is_finite()) {
            return Err(NnError::InvalidConfig(format!(
                "learning rate must be >= 0, got {}",
                config.lr
            )));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(NnError::InvalidConfig("betas must lie in [0, 1)".into()));
        }
        let zeros = || params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Ok(Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn moments(&self, index: usize) -> (&[f64], &[f64]) {
        (&self.first[index], &self.second[index])
    }

    /// One update. Gradients are validated before any parameter changes.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<(), NnError> {
        if grads.len() != params.len() {
            return Err(NnError::ParamMismatch(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(NnError::ParamMismatch(format!(
                    "{name}: gradient shape {:?} vs parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient(name.to_string()));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let correct1 = 1.0 - beta1.powi(t);
        let correct2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (j, (w, &grad)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let grad = grad + weight_decay * *w;
                m[j] = beta1 * m[j] + (1.0 - beta1) * grad;
                v[j] = beta2 * v[j] + (1.0 - beta2) * grad * grad;
                let m_hat = m[j] / correct1;
                let v_hat = v[j] / correct2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}
