use rand_chacha::ChaCha8Rng;

use super::{init_uniform, Forward, NnError, ParamId, ParamStore};
use crate::tensor::{Conv1dSpec, Tensor, TensorError, Var};

/// `y = x · Wᵀ + b` along the trailing axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NnError> {
        if d_out == 0 {
            return Err(NnError::InvalidConfig(format!("{name}: zero output width")));
        }
        let weight = store.add(
            format!("{name}.weight"),
            init_uniform(&[d_out, d_in], d_in, rng)?,
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[d_out]));
        Ok(Self {
            weight,
            bias,
            d_in,
            d_out,
        })
    }

    pub fn param_count(d_in: usize, d_out: usize) -> usize {
        d_in * d_out + d_out
    }

    pub fn forward(&self, f: &Forward<'_>, x: Var) -> Result<Var, TensorError> {
        f.graph()
            .linear(x, f.param(self.weight), Some(f.param(self.bias)))
    }
}

/// Two linear layers with a ReLU between them.
#[derive(Clone, Debug)]
pub struct Mlp2 {
    pub first: Linear,
    pub second: Linear,
}

impl Mlp2 {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        hidden: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NnError> {
        Ok(Self {
            first: Linear::new(store, &format!("{name}.0"), d_in, hidden, rng)?,
            second: Linear::new(store, &format!("{name}.1"), hidden, d_out, rng)?,
        })
    }

    pub fn param_count(d_in: usize, hidden: usize, d_out: usize) -> usize {
        Linear::param_count(d_in, hidden) + Linear::param_count(hidden, d_out)
    }

    /// Applied along the trailing axis, shared over leading axes.
    pub fn forward(&self, f: &Forward<'_>, x: Var) -> Result<Var, TensorError> {
        let trailing = *f.graph().shape(x).last().unwrap();
        if trailing != self.first.d_in {
            return Err(TensorError::IncompatibleShapes {
                op: "mlp",
                lhs: f.graph().shape(x),
                rhs: vec![self.first.d_out, self.first.d_in],
            });
        }
        let h = self.first.forward(f, x)?;
        let h = f.graph().relu(h)?;
        let h = f.dropout(h)?;
        self.second.forward(f, h)
    }
}

#[derive(Clone, Debug)]
pub struct Conv1dLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub spec: Conv1dSpec,
}

impl Conv1dLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        (c_in, c_out, kernel): (usize, usize, usize),
        spec: Conv1dSpec,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NnError> {
        if kernel == 0 || c_out == 0 || spec.stride == 0 || spec.dilation == 0 {
            return Err(NnError::InvalidConfig(format!(
                "{name}: kernel, channels, stride and dilation must be >= 1"
            )));
        }
        let weight = store.add(
            format!("{name}.weight"),
            init_uniform(&[c_out, c_in, kernel], c_in * kernel, rng)?,
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[c_out]));
        Ok(Self {
            weight,
            bias,
            c_in,
            c_out,
            kernel,
            spec,
        })
    }

    /// Kernel size equal to stride, no padding: learned pooling over
    /// disjoint blocks.
    pub fn equispaced(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        kernel: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NnError> {
        let spec = Conv1dSpec {
            stride: kernel,
            ..Default::default()
        };
        Self::new(store, name, (channels, channels, kernel), spec, rng)
    }

    pub fn param_count(c_in: usize, c_out: usize, kernel: usize) -> usize {
        c_out * c_in * kernel + c_out
    }

    pub fn forward(&self, f: &Forward<'_>, x: Var) -> Result<Var, TensorError> {
        f.graph()
            .conv1d(x, f.param(self.weight), Some(f.param(self.bias)), self.spec)
    }
}

/// 1×1 2D convolution.
#[derive(Clone, Debug)]
pub struct Conv2dLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub c_in: usize,
    pub c_out: usize,
}

impl Conv2dLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NnError> {
        if c_out == 0 {
            return Err(NnError::InvalidConfig(format!(
                "{name}: zero output channels"
            )));
        }
        let weight = store.add(
            format!("{name}.weight"),
            init_uniform(&[c_out, c_in, 1, 1], c_in, rng)?,
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[c_out]));
        Ok(Self {
            weight,
            bias,
            c_in,
            c_out,
        })
    }

    pub fn param_count(c_in: usize, c_out: usize) -> usize {
        c_out * c_in + c_out
    }

    pub fn forward(&self, f: &Forward<'_>, x: Var) -> Result<Var, TensorError> {
        f.graph()
            .conv2d(x, f.param(self.weight), Some(f.param(self.bias)))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::tensor::Graph;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn identity_mlp_passes_non_negative_input() {
        let mut store = ParamStore::new();
        let mlp = Mlp2::new(&mut store, "mlp", 3, 3, 3, &mut rng()).unwrap();
        for layer in [&mlp.first, &mlp.second] {
            let w = store.get_mut(layer.weight);
            w.data_mut().fill(0.0);
            for i in 0..3 {
                w.set(&[i, i], 1.0).unwrap();
            }
        }
        let g = Graph::new();
        let f = Forward::inference(&g, &store);
        let x = Tensor::from_vec(&[2, 3], vec![0.0, 1.5, 2.0, 3.0, 0.25, 9.0]).unwrap();
        let y = mlp.forward(&f, g.input(x.clone())).unwrap();
        assert_eq!(*g.value(y), x);
    }

    #[test]
    fn mlp_output_width_and_count() {
        let mut store = ParamStore::new();
        let mlp = Mlp2::new(&mut store, "mlp", 96, 256, 96, &mut rng()).unwrap();
        let g = Graph::new();
        let f = Forward::inference(&g, &store);
        let y = mlp.forward(&f, g.input(Tensor::ones(&[5, 96]))).unwrap();
        assert_eq!(g.shape(y), vec![5, 96]);
        assert_eq!(store.scalar_count(), Mlp2::param_count(96, 256, 96));

        let bad = g.input(Tensor::ones(&[5, 95]));
        assert!(mlp.forward(&f, bad).is_err());
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "lin", 4, 2, &mut rng()).unwrap();
        store.get_mut(lin.weight).data_mut().fill(0.0);
        store
            .get_mut(lin.bias)
            .data_mut()
            .copy_from_slice(&[0.5, -1.0]);
        let g = Graph::new();
        let f = Forward::inference(&g, &store);
        let y = lin.forward(&f, g.input(Tensor::ones(&[3, 4]))).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, -1.0, 0.5, -1.0, 0.5, -1.0]);
    }

    #[test]
    fn equispaced_layer_geometry() {
        let mut store = ParamStore::new();
        let conv = Conv1dLayer::equispaced(&mut store, "eq", 1, 4, &mut rng()).unwrap();
        assert_eq!(conv.spec.stride, conv.kernel);
        let g = Graph::new();
        let f = Forward::inference(&g, &store);
        let y = conv
            .forward(&f, g.input(Tensor::ones(&[3, 1, 192])))
            .unwrap();
        assert_eq!(g.shape(y), vec![3, 1, 48]);
    }
}
