//! Reference implementations used as independent oracles.
//!
//! Nothing here calls into the engine's kernels: the convolutions are plain
//! nested loops over explicit indices and the gradient checker only
//! evaluates forward values.
#![allow(dead_code)]

use cpnet::tensor::{finite_diff_grad, max_relative_error, Graph, Tensor, TensorError, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-5;
/// Denominator floor of the relative-error measure. Central differences
/// at `FD_EPS` carry roundoff of about `f64::EPSILON * |loss| / FD_EPS`
/// (~2e-10 for losses of order one); gradients smaller than this floor are
/// compared at an absolute tolerance of `GRAD_TOL * REL_FLOOR` = 1e-9.
pub const REL_FLOOR: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct evaluation of a 1D convolution on `[C_in, L]` with explicit zero
/// padding materialized first.
pub fn naive_conv1d(
    x: &[Vec<f64>],
    w: &[Vec<Vec<f64>>],
    bias: &[f64],
    stride: usize,
    dilation: usize,
    pad_left: usize,
    pad_right: usize,
) -> Vec<Vec<f64>> {
    let padded: Vec<Vec<f64>> = x
        .iter()
        .map(|row| {
            let mut p = vec![0.0; pad_left];
            p.extend_from_slice(row);
            p.extend(std::iter::repeat_n(0.0, pad_right));
            p
        })
        .collect();
    let len = padded[0].len();
    let kernel = w[0][0].len();
    let span = dilation * (kernel - 1) + 1;
    let mut out = Vec::new();
    for (o, wo) in w.iter().enumerate() {
        let mut row = Vec::new();
        let mut start = 0;
        while start + span <= len {
            let mut acc = bias[o];
            for (c, wc) in wo.iter().enumerate() {
                for (j, wj) in wc.iter().enumerate() {
                    acc += wj * padded[c][start + j * dilation];
                }
            }
            row.push(acc);
            start += stride;
        }
        out.push(row);
    }
    out
}

/// Equispaced convolution as a reshape into `[L / K, K]` blocks followed by
/// a matrix-vector product with the kernel.
pub fn block_dot_conv(x: &[f64], kernel: &[f64], bias: f64) -> Vec<f64> {
    let k = kernel.len();
    x.chunks_exact(k)
        .map(|block| bias + block.iter().zip(kernel).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Explicit per-position weighted sum over channel planes.
pub fn weighted_sum_planes(planes: &[Vec<f64>], weights: &[f64], bias: f64) -> Vec<f64> {
    let mut out = vec![bias; planes[0].len()];
    for (plane, w) in planes.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(plane) {
            *o += w * v;
        }
    }
    out
}

pub fn tensor_rows(t: &Tensor, rows: usize) -> Vec<Vec<f64>> {
    t.data()
        .chunks(t.numel() / rows)
        .map(<[f64]>::to_vec)
        .collect()
}

/// Builds a loss from `inputs` twice: once to backpropagate, once per
/// perturbed element for central differences. Returns the worst relative
/// error over all inputs.
pub fn grad_check<F>(inputs: &[Tensor], build: F) -> f64
where
    F: Fn(&Graph, &[Var]) -> Result<Var, TensorError>,
{
    let graph = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| graph.input(t.clone().with_grad()))
        .collect();
    let loss = build(&graph, &vars).unwrap();
    let grads = graph.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[i])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.shape()));
        let numeric = finite_diff_grad::<_, TensorError>(
            |probe| {
                let g = Graph::new();
                let vars: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, t)| g.input(if j == i { probe.clone() } else { t.clone() }))
                    .collect();
                let loss = build(&g, &vars)?;
                let v = g.value(loss).data()[0];
                Ok(v)
            },
            input,
            FD_EPS,
        )
        .unwrap();
        worst = worst.max(max_relative_error(&analytic, &numeric, REL_FLOOR));
    }
    worst
}

/// Contracts an output with fixed random weights so every output element
/// contributes a distinct amount to the scalar loss.
pub fn weighted_loss(g: &Graph, out: Var, seed: u64) -> Result<Var, TensorError> {
    let shape = g.shape(out);
    let weights = g.constant(random_tensor(&mut rng(seed), &shape));
    let prod = g.mul(out, weights)?;
    g.sum(prod)
}

/// Gradient check over every parameter of a store. `loss` builds a scalar
/// from a bound forward context; the numeric side rebinds perturbed copies
/// of the store as constants.
pub fn param_grad_check<F>(params: &cpnet::nn::ParamStore, loss: F) -> f64
where
    F: Fn(&cpnet::nn::Forward<'_>) -> Result<Var, cpnet::model::ModelError>,
{
    use cpnet::model::ModelError;
    use cpnet::nn::Forward;

    let graph = Graph::new();
    let f = Forward::training(&graph, params);
    let out = loss(&f).unwrap();
    let mut grads = graph.backward(out).unwrap();
    let analytic = f.gradients(&mut grads, params);
    let mut worst: f64 = 0.0;
    for id in params.ids() {
        let numeric = finite_diff_grad::<_, ModelError>(
            |probe| {
                let mut perturbed = params.clone();
                *perturbed.get_mut(id) = probe.clone();
                let g = Graph::new();
                let f = Forward::inference(&g, &perturbed);
                let out = loss(&f)?;
                let v = g.value(out).data()[0];
                Ok(v)
            },
            params.get(id),
            FD_EPS,
        )
        .unwrap();
        let err = max_relative_error(&analytic[id.index()], &numeric, REL_FLOOR);
        worst = worst.max(err);
    }
    worst
}
