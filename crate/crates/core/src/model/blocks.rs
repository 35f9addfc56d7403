use rand_chacha::ChaCha8Rng;

use super::{BranchConfig, ModelConfig, ModelError};
use crate::nn::{Conv1dLayer, Conv2dLayer, Forward, Mlp2, ParamStore};
use crate::tensor::{Conv1dSpec, Var};

/// Splits `total` padding into `(left, right)` with the extra step on the
/// right.
fn split_pad(total: usize) -> (usize, usize) {
    (total / 2, total - total / 2)
}

/// Coarse tokens via a length-preserving conv of width TL, projected to the
/// horizon by a 2-layer perceptron, then collapsed back to one channel.
#[derive(Clone, Debug)]
pub struct TokenProjection {
    pub conv: Conv1dLayer,
    pub mlp: Mlp2,
    pub collapse: Conv1dLayer,
}

impl TokenProjection {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        config: &ModelConfig,
        branch: &BranchConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        let e = config.embed_channels;
        let (pad_left, pad_right) = split_pad(branch.token_length - 1);
        let spec = Conv1dSpec {
            pad_left,
            pad_right,
            ..Default::default()
        };
        Ok(Self {
            conv: Conv1dLayer::new(
                store,
                &format!("{name}.conv"),
                (1, e, branch.token_length),
                spec,
                rng,
            )?,
            mlp: Mlp2::new(
                store,
                &format!("{name}.mlp"),
                config.lookback,
                config.hidden,
                config.horizon,
                rng,
            )?,
            collapse: Conv1dLayer::new(
                store,
                &format!("{name}.collapse"),
                (e, 1, 1),
                Conv1dSpec::default(),
                rng,
            )?,
        })
    }

    /// `[R, 1, I] -> [R, 1, O]`.
    pub fn forward(&self, f: &Forward<'_>, x: Var) -> Result<Var, ModelError> {
        let tokens = self.conv.forward(f, x)?;
        let projected = self.mlp.forward(f, tokens)?;
        Ok(self.collapse.forward(f, projected)?)
    }
}

/// Intermediate values of one contextual sampling pass.
#[derive(Clone, Copy, Debug)]
pub struct SamplingTrace {
    /// `[history ; preliminary prediction]`, plus any alignment padding.
    pub context: Var,
    pub dilated: Var,
    /// Down-sampled representation, length `M`.
    pub sampled: Var,
}

/// History-reuse concatenation, dilated conv at rate SR, then equispaced
/// down-sampling by SR.
#[derive(Clone, Debug)]
pub struct ContextualSampling {
    pub dilated: Conv1dLayer,
    pub sample: Conv1dLayer,
    pub align_pad: usize,
}

impl ContextualSampling {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        config: &ModelConfig,
        branch: &BranchConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        let sr = branch.sampling_rate;
        let (pad_left, pad_right) = split_pad((config.dilated_kernel - 1) * sr);
        let spec = Conv1dSpec {
            dilation: sr,
            pad_left,
            pad_right,
            ..Default::default()
        };
        Ok(Self {
            dilated: Conv1dLayer::new(
                store,
                &format!("{name}.dilated"),
                (1, 1, config.dilated_kernel),
                spec,
                rng,
            )?,
            sample: Conv1dLayer::equispaced(store, &format!("{name}.sample"), 1, sr, rng)?,
            align_pad: config.branch_lengths(branch).align_pad,
        })
    }

    /// `x_tp: [R, 1, O]`, `x_in: [R, 1, I]` -> `[R, 1, M]`.
    pub fn forward(&self, f: &Forward<'_>, x_tp: Var, x_in: Var) -> Result<Var, ModelError> {
        Ok(self.forward_traced(f, x_tp, x_in)?.sampled)
    }

    pub fn forward_traced(
        &self,
        f: &Forward<'_>,
        x_tp: Var,
        x_in: Var,
    ) -> Result<SamplingTrace, ModelError> {
        let g = f.graph();
        let mut parts = Vec::with_capacity(self.align_pad + 2);
        if self.align_pad > 0 {
            let earliest = g.slice(x_in, 2, 0, 1)?;
            parts.extend(std::iter::repeat_n(earliest, self.align_pad));
        }
        parts.push(x_in);
        parts.push(x_tp);
        let context = g.concat(&parts, 2)?;
        let dilated = self.dilated.forward(f, context)?;
        let sampled = self.sample.forward(f, dilated)?;
        Ok(SamplingTrace {
            context,
            dilated,
            sampled,
        })
    }
}

/// One (TL, SR) branch with its own parameters.
#[derive(Clone, Debug)]
pub struct Branch {
    pub config: BranchConfig,
    pub token: TokenProjection,
    pub sampling: ContextualSampling,
    pub predictor: Mlp2,
}

impl Branch {
    pub fn new(
        store: &mut ParamStore,
        index: usize,
        config: &ModelConfig,
        branch: &BranchConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        let name = format!("branch{index}");
        let lens = config.branch_lengths(branch);
        Ok(Self {
            config: *branch,
            token: TokenProjection::new(store, &format!("{name}.tp"), config, branch, rng)?,
            sampling: ContextualSampling::new(store, &format!("{name}.cs"), config, branch, rng)?,
            predictor: Mlp2::new(
                store,
                &format!("{name}.predictor"),
                lens.sampled,
                config.hidden,
                lens.context,
                rng,
            )?,
        })
    }

    /// `[R, 1, I] -> [R, 1, I + O]`.
    pub fn forward(&self, f: &Forward<'_>, x_in: Var) -> Result<Var, ModelError> {
        let x_tp = self.token.forward(f, x_in)?;
        let x_m = self.sampling.forward(f, x_tp, x_in)?;
        Ok(self.predictor.forward(f, x_m)?)
    }
}

/// Blends branch outputs with a 1×1 2D convolution and keeps the final
/// `horizon` steps.
#[derive(Clone, Debug)]
pub struct MultiScaleMerge {
    pub conv: Conv2dLayer,
}

impl MultiScaleMerge {
    pub fn new(
        store: &mut ParamStore,
        branches: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        Ok(Self {
            conv: Conv2dLayer::new(store, "merge", branches, 1, rng)?,
        })
    }

    /// Each output is `[B, N, L]`; the result is `[B, N, horizon]`, the last
    /// `horizon` positions of the blended plane.
    pub fn forward(
        &self,
        f: &Forward<'_>,
        outputs: &[Var],
        horizon: usize,
    ) -> Result<Var, ModelError> {
        let g = f.graph();
        let first = *outputs
            .first()
            .ok_or_else(|| ModelError::InvalidConfig("merge needs at least one branch".into()))?;
        let &[b, n, len] = g.shape(first).as_slice() else {
            return Err(ModelError::Shape(format!(
                "branch output must be [B, N, L], got {:?}",
                g.shape(first)
            )));
        };
        if horizon > len {
            return Err(ModelError::Shape(format!(
                "horizon {horizon} exceeds branch output length {len}"
            )));
        }
        let planes = outputs
            .iter()
            .map(|&o| g.reshape(o, &[b, 1, n, len]))
            .collect::<Result<Vec<_>, _>>()?;
        let stacked = g.concat(&planes, 1)?;
        let blended = self.conv.forward(f, stacked)?;
        let future = g.slice(blended, 3, len - horizon, horizon)?;
        Ok(g.reshape(future, &[b, n, horizon])?)
    }
}
