use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::spec::{Command, RunSpec};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "cpnet",
    version,
    about = "Train and evaluate coarsening forecasters"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Train one model and report validation/test metrics.
    Train(Overrides),
    /// Evaluate a saved checkpoint on the test split.
    Eval(Overrides),
    /// Train the full model and its ablation variants.
    Ablate(Overrides),
    /// Train one model per look-back length.
    SweepLookback(Overrides),
    /// Train one model per branch count.
    SweepBranches(Overrides),
    /// Time training steps across look-back lengths.
    Bench(Overrides),
    /// Write a synthetic multi-sine series as CSV.
    Synth(Overrides),
}

/// Flags shared by every subcommand. Each one overrides the config-file key
/// of the same name (dashes become underscores).
#[derive(Debug, Args)]
struct Overrides {
    /// Plain-text key=value file applied before the flags.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// CSV dataset: timestamp column followed by numeric variates.
    #[arg(long, value_name = "PATH")]
    data: Option<String>,
    /// Synthetic series spec (key=value) used instead of a CSV.
    #[arg(long, value_name = "PATH")]
    synth: Option<String>,
    /// auto, etth, ettm or ratio:<train>:<test>.
    #[arg(long)]
    split: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Directory with model.conf and model.ckpt (eval).
    #[arg(long, value_name = "DIR")]
    checkpoint: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    max_epochs: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    /// Max global gradient norm, or `off`.
    #[arg(long)]
    grad_clip: Option<String>,
    /// Dropout rate inside the perceptrons.
    #[arg(long)]
    dropout: Option<String>,
    #[arg(long)]
    weight_decay: Option<String>,
    #[arg(long)]
    lookback: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
    /// Branch list such as 4:2,8:4,16:8.
    #[arg(long)]
    branches: Option<String>,
    #[arg(long)]
    embed_channels: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    dilated_kernel: Option<String>,
    /// Comma-separated subset of full,no_tp,no_cs,no_tp_cs.
    #[arg(long)]
    variants: Option<String>,
    /// Comma-separated look-back lengths.
    #[arg(long)]
    lookbacks: Option<String>,
    /// Comma-separated branch counts.
    #[arg(long)]
    branch_counts: Option<String>,
    #[arg(long)]
    bench_steps: Option<String>,
    #[arg(long)]
    bench_warmup: Option<String>,
    #[arg(long)]
    bench_channels: Option<String>,
    #[arg(long)]
    bench_epoch_windows: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("data", &self.data),
            ("synth", &self.synth),
            ("split", &self.split),
            ("out", &self.out),
            ("checkpoint", &self.checkpoint),
            ("seed", &self.seed),
            ("lr", &self.lr),
            ("batch_size", &self.batch_size),
            ("max_epochs", &self.max_epochs),
            ("patience", &self.patience),
            ("grad_clip", &self.grad_clip),
            ("dropout", &self.dropout),
            ("weight_decay", &self.weight_decay),
            ("lookback", &self.lookback),
            ("horizon", &self.horizon),
            ("branches", &self.branches),
            ("embed_channels", &self.embed_channels),
            ("hidden", &self.hidden),
            ("dilated_kernel", &self.dilated_kernel),
            ("variants", &self.variants),
            ("lookbacks", &self.lookbacks),
            ("branch_counts", &self.branch_counts),
            ("bench_steps", &self.bench_steps),
            ("bench_warmup", &self.bench_warmup),
            ("bench_channels", &self.bench_channels),
            ("bench_epoch_windows", &self.bench_epoch_windows),
        ]
    }
}

/// Parses arguments (including the program name) into a validated spec.
/// Config-file keys are applied first, then flags.
pub fn parse_cli<I, T>(argv: I) -> Result<RunSpec, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            CliError::Help(e.to_string())
        }
        _ => CliError::Usage(
            e.to_string()
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ")
                .to_string(),
        ),
    })?;
    let (command, flags) = match &cli.command {
        Sub::Train(o) => (Command::Train, o),
        Sub::Eval(o) => (Command::Eval, o),
        Sub::Ablate(o) => (Command::Ablate, o),
        Sub::SweepLookback(o) => (Command::SweepLookback, o),
        Sub::SweepBranches(o) => (Command::SweepBranches, o),
        Sub::Bench(o) => (Command::Bench, o),
        Sub::Synth(o) => (Command::Synth, o),
    };
    let mut spec = RunSpec::new(command);
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        spec.apply_file(&text, &path.display().to_string())?;
    }
    for (key, value) in flags.pairs() {
        if let Some(v) = value {
            spec.set(key, v)
                .map_err(|e| CliError::Usage(format!("--{}: {e}", key.replace('_', "-"))))?;
        }
    }
    spec.validate()?;
    Ok(spec)
}
