use std::cell::{Ref, RefCell};
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::{Tensor, TensorError};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(0);

/// Handle to a node recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    graph: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

/// Geometry of a 1D convolution. Padding is explicit zeros on each side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub stride: usize,
    pub dilation: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl Default for Conv1dSpec {
    fn default() -> Self {
        Self {
            stride: 1,
            dilation: 1,
            pad_left: 0,
            pad_right: 0,
        }
    }
}

impl Conv1dSpec {
    /// Output length for an input of length `len` and a kernel of `kernel`
    /// taps, or `None` when the receptive field exceeds the padded input.
    pub fn output_len(&self, len: usize, kernel: usize) -> Option<usize> {
        let padded = len + self.pad_left + self.pad_right;
        let span = self.dilation * (kernel - 1) + 1;
        if self.stride == 0 || self.dilation == 0 || kernel == 0 || padded < span {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }
}

/// How the smaller operand of a binary op is repeated.
#[derive(Clone, Copy, Debug)]
enum Broadcast {
    None,
    /// Right operand is repeated; each of its values covers `repeat`
    /// consecutive output positions.
    Rhs(usize),
    Lhs(usize),
}

#[derive(Clone, Copy, Debug)]
struct Conv1dGeom {
    batch: usize,
    c_in: usize,
    c_out: usize,
    len: usize,
    kernel: usize,
    out_len: usize,
    spec: Conv1dSpec,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary {
        kind: BinaryKind,
        lhs: usize,
        rhs: usize,
        bcast: Broadcast,
    },
    Scale {
        input: usize,
        factor: f64,
    },
    MatMul {
        lhs: usize,
        rhs: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Linear {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        rows: usize,
        d_in: usize,
        d_out: usize,
    },
    Conv1d {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        geom: Conv1dGeom,
    },
    Conv2d {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        batch: usize,
        c_in: usize,
        c_out: usize,
        plane: usize,
    },
    Relu {
        input: usize,
    },
    Concat {
        inputs: Vec<usize>,
        outer: usize,
        chunks: Vec<usize>,
    },
    Slice {
        input: usize,
        outer: usize,
        in_chunk: usize,
        offset: usize,
        out_chunk: usize,
    },
    Sum {
        input: usize,
    },
    Mean {
        input: usize,
    },
    Reshape {
        input: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Append-only tape of tensor operations.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it
/// and a reverse sweep over the tape is a valid topological order for
/// backpropagation. A graph is built for one forward pass and then dropped.
#[derive(Debug)]
pub struct Graph {
    id: u64,
    nodes: RefCell<Vec<Node>>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`], one per tracked leaf.
#[derive(Debug)]
pub struct Gradients {
    graph: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        if var.graph != self.graph {
            return None;
        }
        self.grads.get(var.index).and_then(Option::as_ref)
    }

    /// Removes and returns the gradient of `var`.
    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        if var.graph != self.graph {
            return None;
        }
        self.grads.get_mut(var.index).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records `tensor` as a leaf. Its gradient is tracked when
    /// `tensor.requires_grad()` is set.
    pub fn input(&self, tensor: Tensor) -> Var {
        let tracked = tensor.requires_grad();
        self.push(tensor, Op::Leaf, tracked)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&self, mut tensor: Tensor) -> Var {
        tensor.set_requires_grad(false);
        self.push(tensor, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> Ref<'_, Tensor> {
        let index = self.check(var).expect("var belongs to another graph");
        Ref::map(self.nodes.borrow(), |nodes| &nodes[index].value)
    }

    pub fn shape(&self, var: Var) -> Vec<usize> {
        self.value(var).shape().to_vec()
    }

    fn check(&self, var: Var) -> Result<usize, TensorError> {
        if var.graph != self.id || var.index >= self.nodes.borrow().len() {
            return Err(TensorError::DetachedVar);
        }
        Ok(var.index)
    }

    fn push(&self, value: Tensor, op: Op, tracked: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, tracked });
        Var {
            graph: self.id,
            index: nodes.len() - 1,
        }
    }

    fn push_checked(
        &self,
        op_name: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        op: Op,
        inputs: &[usize],
    ) -> Result<Var, TensorError> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let tracked = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|&i| nodes[i].tracked)
        };
        Ok(self.push(Tensor::from_parts(shape, data), op, tracked))
    }

    pub fn add(&self, lhs: Var, rhs: Var) -> Result<Var, TensorError> {
        self.elementwise(lhs, rhs, BinaryKind::Add)
    }

    pub fn sub(&self, lhs: Var, rhs: Var) -> Result<Var, TensorError> {
        self.elementwise(lhs, rhs, BinaryKind::Sub)
    }

    pub fn mul(&self, lhs: Var, rhs: Var) -> Result<Var, TensorError> {
        self.elementwise(lhs, rhs, BinaryKind::Mul)
    }

    /// Elementwise binary op. Shapes must be equal, or one operand must
    /// have the same rank with a shape equal to a prefix of the other's
    /// followed by trailing extents of 1.
    pub fn elementwise(&self, lhs: Var, rhs: Var, kind: BinaryKind) -> Result<Var, TensorError> {
        let (li, ri) = (self.check(lhs)?, self.check(rhs)?);
        let nodes = self.nodes.borrow();
        let (a, b) = (&nodes[li].value, &nodes[ri].value);
        let bcast = broadcast_rule(a.shape(), b.shape()).ok_or_else(|| {
            TensorError::IncompatibleShapes {
                op: "elementwise",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            }
        })?;
        let (shape, n) = match bcast {
            Broadcast::Lhs(_) => (b.shape().to_vec(), b.numel()),
            _ => (a.shape().to_vec(), a.numel()),
        };
        let f = match kind {
            BinaryKind::Add => |x: f64, y: f64| x + y,
            BinaryKind::Sub => |x: f64, y: f64| x - y,
            BinaryKind::Mul => |x: f64, y: f64| x * y,
        };
        let (ad, bd) = (a.data(), b.data());
        let data: Vec<f64> = match bcast {
            Broadcast::None => ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::Rhs(r) => (0..n).map(|i| f(ad[i], bd[i / r])).collect(),
            Broadcast::Lhs(r) => (0..n).map(|i| f(ad[i / r], bd[i])).collect(),
        };
        drop(nodes);
        self.push_checked(
            "elementwise",
            shape,
            data,
            Op::Binary {
                kind,
                lhs: li,
                rhs: ri,
                bcast,
            },
            &[li, ri],
        )
    }

    /// Multiplies every element by a constant.
    pub fn scale(&self, input: Var, factor: f64) -> Result<Var, TensorError> {
        let i = self.check(input)?;
        let nodes = self.nodes.borrow();
        let x = &nodes[i].value;
        let shape = x.shape().to_vec();
        let data = x.data().iter().map(|v| v * factor).collect();
        drop(nodes);
        self.push_checked("scale", shape, data, Op::Scale { input: i, factor }, &[i])
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, lhs: Var, rhs: Var) -> Result<Var, TensorError> {
        let (li, ri) = (self.check(lhs)?, self.check(rhs)?);
        let nodes = self.nodes.borrow();
        let (a, b) = (&nodes[li].value, &nodes[ri].value);
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(TensorError::IncompatibleShapes {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, a.data(), false, b.data(), false, &mut out, 0.0);
        drop(nodes);
        self.push_checked(
            "matmul",
            vec![m, n],
            out,
            Op::MatMul {
                lhs: li,
                rhs: ri,
                m,
                k,
                n,
            },
            &[li, ri],
        )
    }

    /// Affine map along the trailing axis: `x · weightᵀ + bias` with
    /// `weight: [d_out, d_in]`, shared over all leading axes.
    pub fn linear(&self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var, TensorError> {
        let (xi, wi) = (self.check(input)?, self.check(weight)?);
        let bi = bias.map(|b| self.check(b)).transpose()?;
        let nodes = self.nodes.borrow();
        let (x, w) = (&nodes[xi].value, &nodes[wi].value);
        let d_in = *x.shape().last().unwrap();
        if w.rank() != 2 || w.shape()[1] != d_in {
            return Err(TensorError::IncompatibleShapes {
                op: "linear",
                lhs: x.shape().to_vec(),
                rhs: w.shape().to_vec(),
            });
        }
        let d_out = w.shape()[0];
        if let Some(bi) = bi {
            let b = &nodes[bi].value;
            if b.shape() != [d_out] {
                return Err(TensorError::IncompatibleShapes {
                    op: "linear bias",
                    lhs: w.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
        }
        let rows = x.numel() / d_in;
        let mut out = match bi {
            Some(bi) => nodes[bi].value.data().repeat(rows),
            None => vec![0.0; rows * d_out],
        };
        gemm(
            rows,
            d_in,
            d_out,
            x.data(),
            false,
            w.data(),
            true,
            &mut out,
            1.0,
        );
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = d_out;
        drop(nodes);
        let mut inputs = vec![xi, wi];
        inputs.extend(bi);
        self.push_checked(
            "linear",
            shape,
            out,
            Op::Linear {
                input: xi,
                weight: wi,
                bias: bi,
                rows,
                d_in,
                d_out,
            },
            &inputs,
        )
    }

    /// 1D convolution (cross-correlation).
    ///
    /// `input` is `[C_in, L]` or batched `[B, C_in, L]`, `weight` is
    /// `[C_out, C_in, K]`, `bias` is `[C_out]`. Output position `t` reads
    /// input positions `t·stride − pad_left + j·dilation` for `j < K`;
    /// positions outside `[0, L)` read zero.
    pub fn conv1d(
        &self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: Conv1dSpec,
    ) -> Result<Var, TensorError> {
        let (xi, wi) = (self.check(input)?, self.check(weight)?);
        let bi = bias.map(|b| self.check(b)).transpose()?;
        let nodes = self.nodes.borrow();
        let (x, w) = (&nodes[xi].value, &nodes[wi].value);
        let unbatched = x.rank() == 2;
        let (batch, c_in, len) = match *x.shape() {
            [c, l] => (1, c, l),
            [b, c, l] => (b, c, l),
            _ => {
                return Err(TensorError::IncompatibleShapes {
                    op: "conv1d",
                    lhs: x.shape().to_vec(),
                    rhs: w.shape().to_vec(),
                })
            }
        };
        if w.rank() != 3 || w.shape()[1] != c_in {
            return Err(TensorError::IncompatibleShapes {
                op: "conv1d",
                lhs: x.shape().to_vec(),
                rhs: w.shape().to_vec(),
            });
        }
        let (c_out, kernel) = (w.shape()[0], w.shape()[2]);
        if let Some(bi) = bi {
            if nodes[bi].value.shape() != [c_out] {
                return Err(TensorError::IncompatibleShapes {
                    op: "conv1d bias",
                    lhs: w.shape().to_vec(),
                    rhs: nodes[bi].value.shape().to_vec(),
                });
            }
        }
        if spec.stride == 0 || spec.dilation == 0 {
            return Err(TensorError::InvalidArgument(format!(
                "conv1d stride and dilation must be >= 1, got {spec:?}"
            )));
        }
        let out_len = spec
            .output_len(len, kernel)
            .ok_or(TensorError::ReceptiveField {
                len,
                kernel,
                dilation: spec.dilation,
                padding: spec.pad_left + spec.pad_right,
            })?;
        let geom = Conv1dGeom {
            batch,
            c_in,
            c_out,
            len,
            kernel,
            out_len,
            spec,
        };
        let bias_data = bi.map(|bi| nodes[bi].value.data());
        let out = conv1d_forward(&geom, x.data(), w.data(), bias_data);
        drop(nodes);
        let shape = if unbatched {
            vec![c_out, out_len]
        } else {
            vec![batch, c_out, out_len]
        };
        let mut inputs = vec![xi, wi];
        inputs.extend(bi);
        self.push_checked(
            "conv1d",
            shape,
            out,
            Op::Conv1d {
                input: xi,
                weight: wi,
                bias: bi,
                geom,
            },
            &inputs,
        )
    }

    /// 2D convolution restricted to 1×1 kernels: a per-position linear
    /// combination across channels.
    ///
    /// `input` is `[C_in, H, W]` or `[B, C_in, H, W]`, `weight` is
    /// `[C_out, C_in, 1, 1]`, `bias` is `[C_out]`.
    pub fn conv2d(&self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var, TensorError> {
        let (xi, wi) = (self.check(input)?, self.check(weight)?);
        let bi = bias.map(|b| self.check(b)).transpose()?;
        let nodes = self.nodes.borrow();
        let (x, w) = (&nodes[xi].value, &nodes[wi].value);
        let mismatch = || TensorError::IncompatibleShapes {
            op: "conv2d",
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        };
        let (batch, c_in, h, wd) = match *x.shape() {
            [c, h, w] => (1, c, h, w),
            [b, c, h, w] => (b, c, h, w),
            _ => return Err(mismatch()),
        };
        if w.rank() != 4 || w.shape()[1] != c_in {
            return Err(mismatch());
        }
        if w.shape()[2] != 1 || w.shape()[3] != 1 {
            return Err(TensorError::InvalidArgument(format!(
                "conv2d supports 1x1 kernels only, got {}x{}",
                w.shape()[2],
                w.shape()[3]
            )));
        }
        let c_out = w.shape()[0];
        if let Some(bi) = bi {
            if nodes[bi].value.shape() != [c_out] {
                return Err(mismatch());
            }
        }
        let plane = h * wd;
        let (xd, wdata) = (x.data(), w.data());
        let mut out = vec![0.0; batch * c_out * plane];
        for b in 0..batch {
            for o in 0..c_out {
                let dst = &mut out[(b * c_out + o) * plane..][..plane];
                if let Some(bi) = bi {
                    dst.fill(nodes[bi].value.data()[o]);
                }
                for c in 0..c_in {
                    let coef = wdata[o * c_in + c];
                    let src = &xd[(b * c_in + c) * plane..][..plane];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += coef * s;
                    }
                }
            }
        }
        let shape = if x.rank() == 3 {
            vec![c_out, h, wd]
        } else {
            vec![batch, c_out, h, wd]
        };
        drop(nodes);
        let mut inputs = vec![xi, wi];
        inputs.extend(bi);
        self.push_checked(
            "conv2d",
            shape,
            out,
            Op::Conv2d {
                input: xi,
                weight: wi,
                bias: bi,
                batch,
                c_in,
                c_out,
                plane,
            },
            &inputs,
        )
    }

    pub fn relu(&self, input: Var) -> Result<Var, TensorError> {
        let i = self.check(input)?;
        let nodes = self.nodes.borrow();
        let x = &nodes[i].value;
        let shape = x.shape().to_vec();
        let data = x
            .data()
            .iter()
            .map(|&v| if v > 0.0 { v } else { 0.0 })
            .collect();
        drop(nodes);
        self.push_checked("relu", shape, data, Op::Relu { input: i }, &[i])
    }

    /// Joins tensors along `axis`. All other extents must agree.
    pub fn concat(&self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = *inputs
            .first()
            .ok_or_else(|| TensorError::InvalidArgument("concat of zero tensors".into()))?;
        let indices = inputs
            .iter()
            .map(|&v| self.check(v))
            .collect::<Result<Vec<_>, _>>()?;
        let nodes = self.nodes.borrow();
        let base = nodes[self.check(first)?].value.shape().to_vec();
        if axis >= base.len() {
            return Err(TensorError::InvalidArgument(format!(
                "concat axis {axis} out of range for rank {}",
                base.len()
            )));
        }
        let mut shape = base.clone();
        shape[axis] = 0;
        for &i in &indices {
            let s = nodes[i].value.shape();
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(ax, (a, b))| ax == axis || a == b);
            if !compatible {
                return Err(TensorError::IncompatibleShapes {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
            shape[axis] += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let chunks: Vec<usize> = indices
            .iter()
            .map(|&i| nodes[i].value.shape()[axis] * inner)
            .collect();
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for (&i, &chunk) in indices.iter().zip(&chunks) {
                out.extend_from_slice(&nodes[i].value.data()[o * chunk..][..chunk]);
            }
        }
        drop(nodes);
        self.push_checked(
            "concat",
            shape,
            out,
            Op::Concat {
                inputs: indices.clone(),
                outer,
                chunks,
            },
            &indices,
        )
    }

    /// Keeps `len` positions along `axis` starting at `start`.
    pub fn slice(
        &self,
        input: Var,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<Var, TensorError> {
        let i = self.check(input)?;
        let nodes = self.nodes.borrow();
        let x = &nodes[i].value;
        let shape_in = x.shape();
        if axis >= shape_in.len() || len == 0 || start + len > shape_in[axis] {
            return Err(TensorError::SliceOutOfBounds {
                axis,
                start,
                len,
                shape: shape_in.to_vec(),
            });
        }
        let outer: usize = shape_in[..axis].iter().product();
        let inner: usize = shape_in[axis + 1..].iter().product();
        let in_chunk = shape_in[axis] * inner;
        let out_chunk = len * inner;
        let offset = start * inner;
        let mut out = Vec::with_capacity(outer * out_chunk);
        for o in 0..outer {
            out.extend_from_slice(&x.data()[o * in_chunk + offset..][..out_chunk]);
        }
        let mut shape = shape_in.to_vec();
        shape[axis] = len;
        drop(nodes);
        self.push_checked(
            "slice",
            shape,
            out,
            Op::Slice {
                input: i,
                outer,
                in_chunk,
                offset,
                out_chunk,
            },
            &[i],
        )
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&self, input: Var) -> Result<Var, TensorError> {
        let i = self.check(input)?;
        let total = self.nodes.borrow()[i].value.data().iter().sum();
        self.push_checked("sum", vec![1], vec![total], Op::Sum { input: i }, &[i])
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&self, input: Var) -> Result<Var, TensorError> {
        let i = self.check(input)?;
        let nodes = self.nodes.borrow();
        let x = nodes[i].value.data();
        let avg = x.iter().sum::<f64>() / x.len() as f64;
        drop(nodes);
        self.push_checked("mean", vec![1], vec![avg], Op::Mean { input: i }, &[i])
    }

    pub fn reshape(&self, input: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let i = self.check(input)?;
        let value = self.nodes.borrow()[i].value.clone().reshape(shape)?;
        let tracked = self.nodes.borrow()[i].tracked;
        Ok(self.push(
            Tensor::from_parts(value.shape().to_vec(), value.into_data()),
            Op::Reshape { input: i },
            tracked,
        ))
    }

    /// Mean squared difference over all elements.
    pub fn mse(&self, prediction: Var, target: Var) -> Result<Var, TensorError> {
        if self.shape(prediction) != self.shape(target) {
            return Err(TensorError::IncompatibleShapes {
                op: "mse",
                lhs: self.shape(prediction),
                rhs: self.shape(target),
            });
        }
        let diff = self.sub(prediction, target)?;
        let sq = self.mul(diff, diff)?;
        self.mean(sq)
    }

    /// Reverse sweep from a scalar `loss`. Returns gradients for every
    /// leaf recorded with `requires_grad`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let root = self.check(loss)?;
        let nodes = self.nodes.borrow();
        if nodes[root].value.numel() != 1 {
            return Err(TensorError::NotScalar(nodes[root].value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if nodes[root].tracked {
            grads[root] = Some(vec![1.0]);
        }
        for index in (0..=root).rev() {
            let node = &nodes[index];
            if !node.tracked {
                continue;
            }
            let Some(grad) = grads[index].take() else {
                continue;
            };
            if matches!(node.op, Op::Leaf) {
                grads[index] = Some(grad);
                continue;
            }
            propagate(&nodes, index, &grad, &mut grads);
        }
        let grads = grads
            .into_iter()
            .zip(nodes.iter())
            .map(|(g, node)| match (g, &node.op) {
                (Some(g), Op::Leaf) => Some(Tensor::from_parts(node.value.shape().to_vec(), g)),
                _ => None,
            })
            .collect();
        Ok(Gradients {
            graph: self.id,
            grads,
        })
    }
}

fn broadcast_rule(a: &[usize], b: &[usize]) -> Option<Broadcast> {
    if a == b {
        return Some(Broadcast::None);
    }
    if a.len() != b.len() {
        return None;
    }
    // `small` must equal `big` on a prefix and be 1 on the remaining axes.
    let fits = |big: &[usize], small: &[usize]| {
        let split = small
            .iter()
            .zip(big)
            .position(|(s, b)| s != b)
            .unwrap_or(small.len());
        small[split..].iter().all(|&e| e == 1)
    };
    let numel = |s: &[usize]| s.iter().product::<usize>();
    if fits(a, b) {
        Some(Broadcast::Rhs(numel(a) / numel(b)))
    } else if fits(b, a) {
        Some(Broadcast::Lhs(numel(b) / numel(a)))
    } else {
        None
    }
}

/// `c = op(a) · op(b) + beta · c` where `op` optionally transposes.
/// `a` is `[m, k]` after `op`, `b` is `[k, n]` after `op`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    c: &mut [f64],
    beta: f64,
) {
    let view = |data, rows, cols, transposed: bool| {
        if transposed {
            ArrayView2::from_shape((cols, rows), data)
                .unwrap()
                .reversed_axes()
        } else {
            ArrayView2::from_shape((rows, cols), data).unwrap()
        }
    };
    let a = view(a, m, k, a_transposed);
    let b = view(b, k, n, b_transposed);
    let mut c = ArrayViewMut2::from_shape((m, n), c).unwrap();
    general_mat_mul(1.0, &a, &b, beta, &mut c);
}

fn conv1d_forward(g: &Conv1dGeom, x: &[f64], w: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let mut out = vec![0.0; g.batch * g.c_out * g.out_len];
    for b in 0..g.batch {
        for o in 0..g.c_out {
            let row = &mut out[(b * g.c_out + o) * g.out_len..][..g.out_len];
            for (t, y) in row.iter_mut().enumerate() {
                let mut acc = bias.map_or(0.0, |bias| bias[o]);
                let base = (t * g.spec.stride) as isize - g.spec.pad_left as isize;
                for c in 0..g.c_in {
                    let xs = &x[(b * g.c_in + c) * g.len..][..g.len];
                    let ws = &w[(o * g.c_in + c) * g.kernel..][..g.kernel];
                    for (j, &wj) in ws.iter().enumerate() {
                        let pos = base + (j * g.spec.dilation) as isize;
                        if pos >= 0 && (pos as usize) < g.len {
                            acc += wj * xs[pos as usize];
                        }
                    }
                }
                *y = acc;
            }
        }
    }
    out
}

fn accumulate(grads: &mut [Option<Vec<f64>>], index: usize, len: usize) -> &mut Vec<f64> {
    grads[index].get_or_insert_with(|| vec![0.0; len])
}

fn propagate(nodes: &[Node], index: usize, grad: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let tracked = |i: usize| nodes[i].tracked;
    let numel = |i: usize| nodes[i].value.numel();
    match &nodes[index].op {
        Op::Leaf => {}
        &Op::Binary {
            kind,
            lhs,
            rhs,
            bcast,
        } => {
            let (a, b) = (nodes[lhs].value.data(), nodes[rhs].value.data());
            // Maps an output position to the operand's position.
            let (ra, rb) = match bcast {
                Broadcast::None => (1, 1),
                Broadcast::Rhs(r) => (1, r),
                Broadcast::Lhs(r) => (r, 1),
            };
            if tracked(lhs) {
                let ga = accumulate(grads, lhs, numel(lhs));
                for (i, g) in grad.iter().enumerate() {
                    ga[i / ra] += match kind {
                        BinaryKind::Add | BinaryKind::Sub => *g,
                        BinaryKind::Mul => g * b[i / rb],
                    };
                }
            }
            if tracked(rhs) {
                let gb = accumulate(grads, rhs, numel(rhs));
                for (i, g) in grad.iter().enumerate() {
                    gb[i / rb] += match kind {
                        BinaryKind::Add => *g,
                        BinaryKind::Sub => -g,
                        BinaryKind::Mul => g * a[i / ra],
                    };
                }
            }
        }
        &Op::Scale { input, factor } => {
            if tracked(input) {
                let gx = accumulate(grads, input, numel(input));
                for (d, g) in gx.iter_mut().zip(grad) {
                    *d += g * factor;
                }
            }
        }
        &Op::MatMul { lhs, rhs, m, k, n } => {
            if tracked(lhs) {
                // dA = dC · Bᵀ
                let b = nodes[rhs].value.data();
                let ga = accumulate(grads, lhs, m * k);
                gemm(m, n, k, grad, false, b, true, ga, 1.0);
            }
            if tracked(rhs) {
                // dB = Aᵀ · dC
                let a = nodes[lhs].value.data();
                let gb = accumulate(grads, rhs, k * n);
                gemm(k, m, n, a, true, grad, false, gb, 1.0);
            }
        }
        &Op::Linear {
            input,
            weight,
            bias,
            rows,
            d_in,
            d_out,
        } => {
            if tracked(input) {
                let w = nodes[weight].value.data();
                let gx = accumulate(grads, input, rows * d_in);
                gemm(rows, d_out, d_in, grad, false, w, false, gx, 1.0);
            }
            if tracked(weight) {
                let x = nodes[input].value.data();
                let gw = accumulate(grads, weight, d_out * d_in);
                gemm(d_out, rows, d_in, grad, true, x, false, gw, 1.0);
            }
            if let Some(bias) = bias.filter(|&b| tracked(b)) {
                let gb = accumulate(grads, bias, d_out);
                for row in grad.chunks_exact(d_out) {
                    for (d, g) in gb.iter_mut().zip(row) {
                        *d += g;
                    }
                }
            }
        }
        &Op::Conv1d {
            input,
            weight,
            bias,
            geom: g,
        } => {
            let x = nodes[input].value.data();
            let w = nodes[weight].value.data();
            let mut gx = tracked(input).then(|| vec![0.0; x.len()]);
            let mut gw = tracked(weight).then(|| vec![0.0; w.len()]);
            let mut gb = bias.filter(|&b| tracked(b)).map(|_| vec![0.0; g.c_out]);
            for b in 0..g.batch {
                for o in 0..g.c_out {
                    let row = &grad[(b * g.c_out + o) * g.out_len..][..g.out_len];
                    for (t, &go) in row.iter().enumerate() {
                        if let Some(gb) = gb.as_mut() {
                            gb[o] += go;
                        }
                        let base = (t * g.spec.stride) as isize - g.spec.pad_left as isize;
                        for c in 0..g.c_in {
                            let xoff = (b * g.c_in + c) * g.len;
                            let woff = (o * g.c_in + c) * g.kernel;
                            for j in 0..g.kernel {
                                let pos = base + (j * g.spec.dilation) as isize;
                                if pos < 0 || pos as usize >= g.len {
                                    continue;
                                }
                                let pos = pos as usize;
                                if let Some(gw) = gw.as_mut() {
                                    gw[woff + j] += go * x[xoff + pos];
                                }
                                if let Some(gx) = gx.as_mut() {
                                    gx[xoff + pos] += go * w[woff + j];
                                }
                            }
                        }
                    }
                }
            }
            for (target, local) in [(Some(input), gx), (Some(weight), gw), (bias, gb)] {
                if let (Some(target), Some(local)) = (target, local) {
                    add_into(accumulate(grads, target, local.len()), &local);
                }
            }
        }
        &Op::Conv2d {
            input,
            weight,
            bias,
            batch,
            c_in,
            c_out,
            plane,
        } => {
            let x = nodes[input].value.data();
            let w = nodes[weight].value.data();
            if tracked(input) {
                let gx = accumulate(grads, input, x.len());
                for b in 0..batch {
                    for o in 0..c_out {
                        let go = &grad[(b * c_out + o) * plane..][..plane];
                        for c in 0..c_in {
                            let coef = w[o * c_in + c];
                            let dst = &mut gx[(b * c_in + c) * plane..][..plane];
                            for (d, g) in dst.iter_mut().zip(go) {
                                *d += coef * g;
                            }
                        }
                    }
                }
            }
            if tracked(weight) {
                let gw = accumulate(grads, weight, w.len());
                for b in 0..batch {
                    for o in 0..c_out {
                        let go = &grad[(b * c_out + o) * plane..][..plane];
                        for c in 0..c_in {
                            let xs = &x[(b * c_in + c) * plane..][..plane];
                            gw[o * c_in + c] += go.iter().zip(xs).map(|(g, v)| g * v).sum::<f64>();
                        }
                    }
                }
            }
            if let Some(bias) = bias.filter(|&b| tracked(b)) {
                let gb = accumulate(grads, bias, c_out);
                for b in 0..batch {
                    for (o, d) in gb.iter_mut().enumerate() {
                        *d += grad[(b * c_out + o) * plane..][..plane].iter().sum::<f64>();
                    }
                }
            }
        }
        &Op::Relu { input } => {
            if tracked(input) {
                let y = nodes[index].value.data();
                let gx = accumulate(grads, input, y.len());
                for ((d, g), &v) in gx.iter_mut().zip(grad).zip(y) {
                    if v > 0.0 {
                        *d += g;
                    }
                }
            }
        }
        Op::Concat {
            inputs,
            outer,
            chunks,
        } => {
            let total: usize = chunks.iter().sum();
            let mut offset = 0;
            for (&input, &chunk) in inputs.iter().zip(chunks) {
                if tracked(input) {
                    let gx = accumulate(grads, input, outer * chunk);
                    for o in 0..*outer {
                        add_into(
                            &mut gx[o * chunk..][..chunk],
                            &grad[o * total + offset..][..chunk],
                        );
                    }
                }
                offset += chunk;
            }
        }
        &Op::Slice {
            input,
            outer,
            in_chunk,
            offset,
            out_chunk,
        } => {
            if tracked(input) {
                let gx = accumulate(grads, input, outer * in_chunk);
                for o in 0..outer {
                    add_into(
                        &mut gx[o * in_chunk + offset..][..out_chunk],
                        &grad[o * out_chunk..][..out_chunk],
                    );
                }
            }
        }
        &Op::Sum { input } => {
            if tracked(input) {
                let gx = accumulate(grads, input, numel(input));
                gx.iter_mut().for_each(|d| *d += grad[0]);
            }
        }
        &Op::Mean { input } => {
            if tracked(input) {
                let n = numel(input);
                let share = grad[0] / n as f64;
                let gx = accumulate(grads, input, n);
                gx.iter_mut().for_each(|d| *d += share);
            }
        }
        &Op::Reshape { input } => {
            if tracked(input) {
                add_into(accumulate(grads, input, grad.len()), grad);
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
