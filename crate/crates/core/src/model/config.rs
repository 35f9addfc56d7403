use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::nn::{Conv1dLayer, Conv2dLayer, Mlp2};

/// One coarsening branch: token length and sampling rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchConfig {
    /// Time steps aggregated into one coarse token.
    pub token_length: usize,
    /// Dilation of the contextual conv, and kernel/stride of the
    /// down-sampling conv.
    pub sampling_rate: usize,
}

impl BranchConfig {
    pub fn new(token_length: usize, sampling_rate: usize) -> Self {
        Self {
            token_length,
            sampling_rate,
        }
    }
}

impl fmt::Display for BranchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.token_length, self.sampling_rate)
    }
}

impl FromStr for BranchConfig {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::InvalidConfig(format!("branch `{s}` is not TL:SR"));
        let (tl, sr) = s.trim().split_once(':').ok_or_else(bad)?;
        Ok(Self::new(
            tl.trim().parse().map_err(|_| bad())?,
            sr.trim().parse().map_err(|_| bad())?,
        ))
    }
}

/// Formats `4:2,8:4,16:8`.
pub fn format_branches(branches: &[BranchConfig]) -> String {
    branches
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_branches(s: &str) -> Result<Vec<BranchConfig>, ModelError> {
    s.split(',')
        .filter(|part| !part.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Derived sequence lengths of one branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BranchLengths {
    /// `I + O`.
    pub context: usize,
    /// Replicated-value padding prepended so the sampling rate divides the
    /// context length.
    pub align_pad: usize,
    /// Length after down-sampling.
    pub sampled: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoTp,
    NoCs,
    NoTpCs,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Self::Full, Self::NoTp, Self::NoCs, Self::NoTpCs];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoTp => "no_tp",
            Self::NoCs => "no_cs",
            Self::NoTpCs => "no_tp_cs",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| {
                ModelError::InvalidConfig(format!(
                    "unknown ablation variant `{s}` (expected full, no_tp, no_cs or no_tp_cs)"
                ))
            })
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub branches: Vec<BranchConfig>,
    pub embed_channels: usize,
    pub hidden: usize,
    pub dilated_kernel: usize,
    pub ablate_tp: bool,
    pub ablate_cs: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lookback: 96,
            horizon: 96,
            branches: vec![
                BranchConfig::new(4, 2),
                BranchConfig::new(8, 4),
                BranchConfig::new(16, 8),
            ],
            embed_channels: 1,
            hidden: 256,
            dilated_kernel: 3,
            ablate_tp: false,
            ablate_cs: false,
        }
    }
}

pub const MAX_EMBED_CHANNELS: usize = 32;

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.lookback < 2 {
            return fail(format!("lookback must be >= 2, got {}", self.lookback));
        }
        if self.horizon < 1 {
            return fail("horizon must be >= 1".into());
        }
        if self.branches.is_empty() {
            return fail("at least one branch is required".into());
        }
        for b in &self.branches {
            if b.token_length < 1 || b.sampling_rate < 1 {
                return fail(format!("branch {b}: TL and SR must be >= 1"));
            }
            if b.token_length > self.lookback {
                return fail(format!(
                    "branch {b}: token length exceeds lookback {}",
                    self.lookback
                ));
            }
        }
        if !(1..=MAX_EMBED_CHANNELS).contains(&self.embed_channels) {
            return fail(format!(
                "embed_channels must be in 1..={MAX_EMBED_CHANNELS}, got {}",
                self.embed_channels
            ));
        }
        if self.hidden < 1 {
            return fail("hidden must be >= 1".into());
        }
        if self.dilated_kernel.is_multiple_of(2) {
            return fail(format!(
                "dilated_kernel must be odd, got {}",
                self.dilated_kernel
            ));
        }
        if self.ablate_tp && self.branches.iter().any(|b| b.token_length != 1) {
            return fail("ablate_tp requires every token length to be 1".into());
        }
        if self.ablate_cs
            && (self.dilated_kernel != 1 || self.branches.iter().any(|b| b.sampling_rate != 1))
        {
            return fail("ablate_cs requires dilated_kernel=1 and every sampling rate 1".into());
        }
        Ok(())
    }

    pub fn branch_lengths(&self, branch: &BranchConfig) -> BranchLengths {
        let context = self.lookback + self.horizon;
        let sr = branch.sampling_rate;
        let sampled = context.div_ceil(sr);
        BranchLengths {
            context,
            align_pad: sampled * sr - context,
            sampled,
        }
    }

    /// Exact number of scalar parameters of the network built from this
    /// configuration.
    pub fn param_count(&self) -> usize {
        let (i, o, e, h) = (
            self.lookback,
            self.horizon,
            self.embed_channels,
            self.hidden,
        );
        let per_branch: usize = self
            .branches
            .iter()
            .map(|b| {
                let lens = self.branch_lengths(b);
                Conv1dLayer::param_count(1, e, b.token_length)
                    + Mlp2::param_count(i, h, o)
                    + Conv1dLayer::param_count(e, 1, 1)
                    + Conv1dLayer::param_count(1, 1, self.dilated_kernel)
                    + Conv1dLayer::param_count(1, 1, b.sampling_rate)
                    + Mlp2::param_count(lens.sampled, h, lens.context)
            })
            .sum();
        per_branch + Conv2dLayer::param_count(self.branches.len(), 1)
    }

    /// Plain-text `key=value` lines describing the architecture.
    pub fn to_kv(&self) -> String {
        format!(
            "lookback={}\nhorizon={}\nbranches={}\nembed_channels={}\nhidden={}\ndilated_kernel={}\nablate_tp={}\nablate_cs={}\n",
            self.lookback,
            self.horizon,
            format_branches(&self.branches),
            self.embed_channels,
            self.hidden,
            self.dilated_kernel,
            self.ablate_tp,
            self.ablate_cs,
        )
    }

    /// Parses the output of [`to_kv`](Self::to_kv). Every key is required;
    /// unknown keys are rejected.
    pub fn from_kv(text: &str) -> Result<Self, ModelError> {
        let mut cfg = ModelConfig::default();
        let mut seen = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ModelError::InvalidConfig(format!("line {}: expected key=value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value)?;
            seen.push(key.to_string());
        }
        for key in Self::KEYS {
            if !seen.iter().any(|k| k == key) {
                return Err(ModelError::InvalidConfig(format!("missing key `{key}`")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub const KEYS: [&'static str; 8] = [
        "lookback",
        "horizon",
        "branches",
        "embed_channels",
        "hidden",
        "dilated_kernel",
        "ablate_tp",
        "ablate_cs",
    ];

    /// Sets one field from its textual `key=value` form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ModelError> {
        fn num(key: &str, value: &str) -> Result<usize, ModelError> {
            value.parse().map_err(|_| {
                ModelError::InvalidConfig(format!("`{key}` expects an integer, got `{value}`"))
            })
        }
        fn flag(key: &str, value: &str) -> Result<bool, ModelError> {
            value.parse().map_err(|_| {
                ModelError::InvalidConfig(format!("`{key}` expects true/false, got `{value}`"))
            })
        }
        match key {
            "lookback" => self.lookback = num(key, value)?,
            "horizon" => self.horizon = num(key, value)?,
            "branches" => self.branches = parse_branches(value)?,
            "embed_channels" => self.embed_channels = num(key, value)?,
            "hidden" => self.hidden = num(key, value)?,
            "dilated_kernel" => self.dilated_kernel = num(key, value)?,
            "ablate_tp" => self.ablate_tp = flag(key, value)?,
            "ablate_cs" => self.ablate_cs = flag(key, value)?,
            _ => {
                return Err(ModelError::InvalidConfig(format!(
                    "unknown model key `{key}`"
                )))
            }
        }
        Ok(())
    }
}

/// Rewrites a configuration for an ablation variant.
///
/// `no_tp` forces every token length to 1 (the token MLP is kept);
/// `no_cs` forces every sampling rate and the dilated kernel to 1, so the
/// predictor consumes the full `I + O` sequence. Variants compose.
pub fn apply_ablation(config: &ModelConfig, variant: Ablation) -> ModelConfig {
    let mut out = config.clone();
    if matches!(variant, Ablation::NoTp | Ablation::NoTpCs) {
        out.ablate_tp = true;
        out.branches.iter_mut().for_each(|b| b.token_length = 1);
    }
    if matches!(variant, Ablation::NoCs | Ablation::NoTpCs) {
        out.ablate_cs = true;
        out.dilated_kernel = 1;
        out.branches.iter_mut().for_each(|b| b.sampling_rate = 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_branch_lengths() {
        let cfg = ModelConfig::default();
        let sampled: Vec<_> = cfg
            .branches
            .iter()
            .map(|b| cfg.branch_lengths(b).sampled)
            .collect();
        assert_eq!(sampled, [96, 48, 24]);
        assert!(cfg
            .branches
            .iter()
            .all(|b| cfg.branch_lengths(b).align_pad == 0));
    }

    #[test]
    fn non_dividing_rate_pads_to_next_multiple() {
        let cfg = ModelConfig {
            lookback: 10,
            horizon: 5,
            ..Default::default()
        };
        let lens = cfg.branch_lengths(&BranchConfig::new(2, 4));
        assert_eq!(lens.context, 15);
        assert_eq!(lens.align_pad, 1);
        assert_eq!(lens.sampled, 4);
    }

    #[test]
    fn ablation_rules() {
        let cfg = ModelConfig {
            branches: vec![BranchConfig::new(4, 2), BranchConfig::new(8, 4)],
            ..Default::default()
        };
        assert_eq!(apply_ablation(&cfg, Ablation::Full), cfg);
        let no_tp = apply_ablation(&cfg, Ablation::NoTp);
        assert_eq!(
            no_tp.branches,
            [BranchConfig::new(1, 2), BranchConfig::new(1, 4)]
        );
        let no_cs = apply_ablation(&cfg, Ablation::NoCs);
        for b in &no_cs.branches {
            assert_eq!(no_cs.branch_lengths(b).sampled, 192);
        }
        assert_eq!(
            apply_ablation(&no_tp, Ablation::NoCs),
            apply_ablation(&cfg, Ablation::NoTpCs)
        );
        for variant in Ablation::ALL {
            apply_ablation(&cfg, variant).validate().unwrap();
        }
        assert!("no_xx".parse::<Ablation>().is_err());
        assert_eq!("no_tp_cs".parse::<Ablation>().unwrap(), Ablation::NoTpCs);
    }

    #[test]
    fn kv_round_trip_and_rejections() {
        let cfg = apply_ablation(
            &ModelConfig {
                embed_channels: 4,
                ..Default::default()
            },
            Ablation::NoTp,
        );
        assert_eq!(ModelConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
        assert!(ModelConfig::from_kv("lookback=96\n").is_err());
        let unknown = format!("{}colour=blue\n", cfg.to_kv());
        assert!(ModelConfig::from_kv(&unknown).is_err());
        assert!(parse_branches("4:2,x").is_err());
    }

    #[test]
    fn validation() {
        let cfg = ModelConfig {
            dilated_kernel: 4,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::default();
        cfg.branches.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::default();
        cfg.branches[0].token_length = 97;
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig {
            embed_channels: 33,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
