use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NnError;
use crate::tensor::{Gradients, Graph, Tensor, TensorError, Var};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable tensors.
///
/// Order is registration order and is stable: checkpoints, optimizer state
/// and gradients are all aligned to it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Replaces every tensor with the one of the same name in `other`.
    /// Names and shapes must match exactly.
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<(), NnError> {
        if self.names != other.names {
            return Err(NnError::ParamMismatch("parameter names differ".to_string()));
        }
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            if dst.shape() != src.shape() {
                return Err(NnError::ParamMismatch(format!(
                    "shape {:?} vs {:?}",
                    dst.shape(),
                    src.shape()
                )));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

/// Weights drawn from `Uniform(−√(1/fan_in), +√(1/fan_in))`.
pub fn init_uniform(
    shape: &[usize],
    fan_in: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor, NnError> {
    if fan_in == 0 {
        return Err(NnError::ZeroFanIn);
    }
    let bound = (1.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Ok(Tensor::from_vec(shape, data)?)
}

struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

/// Parameters of a [`ParamStore`] bound into one [`Graph`] for one pass.
pub struct Forward<'g> {
    graph: &'g Graph,
    vars: Vec<Var>,
    dropout: Option<RefCell<Dropout>>,
}

impl<'g> Forward<'g> {
    /// Binds every parameter as a differentiable leaf.
    pub fn training(graph: &'g Graph, params: &ParamStore) -> Self {
        let vars = params
            .tensors
            .iter()
            .map(|t| graph.input(t.clone().with_grad()))
            .collect();
        Self {
            graph,
            vars,
            dropout: None,
        }
    }

    /// Binds every parameter as a constant; no gradient bookkeeping.
    pub fn inference(graph: &'g Graph, params: &ParamStore) -> Self {
        let vars = params
            .tensors
            .iter()
            .map(|t| graph.constant(t.clone()))
            .collect();
        Self {
            graph,
            vars,
            dropout: None,
        }
    }

    /// Enables inverted dropout at `rate` with masks drawn from `seed`.
    pub fn with_dropout(mut self, rate: f64, seed: u64) -> Self {
        if rate > 0.0 {
            self.dropout = Some(RefCell::new(Dropout {
                rate,
                rng: ChaCha8Rng::seed_from_u64(seed),
            }));
        }
        self
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn param(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Applies the dropout mask when enabled; identity otherwise.
    pub fn dropout(&self, x: Var) -> Result<Var, TensorError> {
        let Some(state) = &self.dropout else {
            return Ok(x);
        };
        let mut state = state.borrow_mut();
        let keep = 1.0 - state.rate;
        let shape = self.graph.shape(x);
        let n = shape.iter().product();
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if state.rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let mask = self.graph.constant(Tensor::from_vec(&shape, mask)?);
        self.graph.mul(x, mask)
    }

    /// Gradients aligned with the store's parameter order; parameters
    /// that did not influence the loss get zeros.
    pub fn gradients(&self, grads: &mut Gradients, params: &ParamStore) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(&params.tensors)
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    }
}
