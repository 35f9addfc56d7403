use std::fmt::Write as _;
use std::path::PathBuf;

use cpnet::data::{SplitScheme, SynthSpec};
use cpnet::model::{Ablation, ModelConfig};
use cpnet::train::TrainConfig;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Eval,
    Ablate,
    SweepLookback,
    SweepBranches,
    Bench,
    Synth,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Ablate => "ablate",
            Command::SweepLookback => "sweep-lookback",
            Command::SweepBranches => "sweep-branches",
            Command::Bench => "bench",
            Command::Synth => "synth",
        }
    }

    fn needs_data(self) -> bool {
        !matches!(self, Command::Bench | Command::Synth)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    /// Path to a `key=value` synthetic-series spec.
    Synth(PathBuf),
}

/// How to cut the series into train/val/test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitChoice {
    /// ETT fixed lengths when the file name says so, ratios otherwise.
    Auto,
    Fixed(SplitScheme),
}

impl SplitChoice {
    fn parse(value: &str) -> Option<Self> {
        match value {
            "auto" => Some(Self::Auto),
            "etth" => Some(Self::Fixed(SplitScheme::EttHourly)),
            "ettm" => Some(Self::Fixed(SplitScheme::EttMinute)),
            _ => {
                let rest = value.strip_prefix("ratio:")?;
                let (train, test) = rest.split_once(':')?;
                Some(Self::Fixed(SplitScheme::Ratio {
                    train: train.parse().ok()?,
                    test: test.parse().ok()?,
                }))
            }
        }
    }

    fn format(self) -> String {
        match self {
            Self::Auto => "auto".into(),
            Self::Fixed(SplitScheme::EttHourly) => "etth".into(),
            Self::Fixed(SplitScheme::EttMinute) => "ettm".into(),
            Self::Fixed(SplitScheme::Ratio { train, test }) => format!("ratio:{train:?}:{test:?}"),
        }
    }

    pub fn resolve(self, dataset_name: &str) -> SplitScheme {
        match self {
            Self::Auto => SplitScheme::for_dataset(dataset_name),
            Self::Fixed(s) => s,
        }
    }
}

/// Everything a command needs, with defaults materialized.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub command: Command,
    pub data: Option<DataSource>,
    pub split: SplitChoice,
    pub out: PathBuf,
    /// Directory holding `model.conf` and `model.ckpt`, for `eval`.
    pub checkpoint: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub variants: Vec<Ablation>,
    pub lookbacks: Vec<usize>,
    pub branch_counts: Vec<usize>,
    pub bench_steps: usize,
    pub bench_warmup: usize,
    pub bench_channels: usize,
    pub bench_epoch_windows: usize,
}

/// Keys accepted in config files besides the model and training keys.
pub const RUN_KEYS: [&str; 12] = [
    "data",
    "synth",
    "split",
    "out",
    "checkpoint",
    "variants",
    "lookbacks",
    "branch_counts",
    "bench_steps",
    "bench_warmup",
    "bench_channels",
    "bench_epoch_windows",
];

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Usage(format!("`{key}`: cannot parse `{s}`")))
        })
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl RunSpec {
    pub fn new(command: Command) -> Self {
        let lookbacks = match command {
            Command::Bench => vec![96, 192, 384, 768],
            _ => vec![48, 96, 192, 336, 720],
        };
        Self {
            command,
            data: None,
            split: SplitChoice::Auto,
            out: PathBuf::from("out"),
            checkpoint: None,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            variants: Ablation::ALL.to_vec(),
            lookbacks,
            branch_counts: vec![1, 2, 3, 4],
            bench_steps: 20,
            bench_warmup: 3,
            bench_channels: 1,
            bench_epoch_windows: 256,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let num = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| CliError::Usage(format!("`{key}` expects an integer, got `{v}`")))
        };
        match key {
            "data" => self.data = Some(DataSource::Csv(value.into())),
            "synth" => self.data = Some(DataSource::Synth(value.into())),
            "split" => {
                self.split = SplitChoice::parse(value).ok_or_else(|| {
                    CliError::Usage(format!(
                        "`split` expects auto, etth, ettm or ratio:<train>:<test>, got `{value}`"
                    ))
                })?
            }
            "out" => self.out = value.into(),
            "checkpoint" => self.checkpoint = Some(value.into()),
            "variants" => {
                self.variants = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        s.parse::<Ablation>()
                            .map_err(|e| CliError::Usage(e.to_string()))
                    })
                    .collect::<Result<_, _>>()?
            }
            "lookbacks" => self.lookbacks = list(key, value)?,
            "branch_counts" => self.branch_counts = list(key, value)?,
            "bench_steps" => self.bench_steps = num(value)?,
            "bench_warmup" => self.bench_warmup = num(value)?,
            "bench_channels" => self.bench_channels = num(value)?,
            "bench_epoch_windows" => self.bench_epoch_windows = num(value)?,
            k if ModelConfig::KEYS.contains(&k) => self
                .model
                .set(k, value)
                .map_err(|e| CliError::Usage(e.to_string()))?,
            k if TrainConfig::KEYS.contains(&k) => self
                .train
                .set(k, value)
                .map_err(|e| CliError::Usage(e.to_string()))?,
            _ => return Err(CliError::Usage(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a `key=value` file: one key per line, `#` starts a comment.
    pub fn apply_file(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "{origin}:{}: expected key=value, got `{line}`",
                    i + 1
                ))
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| CliError::Usage(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.command.needs_data() && self.data.is_none() {
            return Err(CliError::Usage(format!(
                "`{}` needs a dataset: pass --data <file.csv> or --synth <spec.conf>",
                self.command.as_str()
            )));
        }
        self.model
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if self.variants.is_empty() {
            return Err(CliError::Usage("`variants` is empty".into()));
        }
        if self.bench_steps == 0 {
            return Err(CliError::Usage("`bench_steps` must be >= 1".into()));
        }
        Ok(())
    }

    /// The fully-resolved configuration as a file accepted by
    /// [`apply_file`](Self::apply_file).
    pub fn to_config(&self) -> String {
        let mut s = format!("# cpnet {}\n", self.command.as_str());
        match &self.data {
            Some(DataSource::Csv(p)) => writeln!(s, "data={}", p.display()).unwrap(),
            Some(DataSource::Synth(p)) => writeln!(s, "synth={}", p.display()).unwrap(),
            None => s.push_str("# no dataset\n"),
        }
        writeln!(s, "split={}", self.split.format()).unwrap();
        writeln!(s, "out={}", self.out.display()).unwrap();
        if let Some(c) = &self.checkpoint {
            writeln!(s, "checkpoint={}", c.display()).unwrap();
        }
        s.push_str("\n# model\n");
        s.push_str(&self.model.to_kv());
        s.push_str("\n# training\n");
        s.push_str(&self.train.to_kv());
        s.push_str("\n# experiments\n");
        let variants: Vec<&str> = self.variants.iter().map(|v| v.as_str()).collect();
        writeln!(s, "variants={}", variants.join(",")).unwrap();
        writeln!(s, "lookbacks={}", join(&self.lookbacks)).unwrap();
        writeln!(s, "branch_counts={}", join(&self.branch_counts)).unwrap();
        writeln!(s, "bench_steps={}", self.bench_steps).unwrap();
        writeln!(s, "bench_warmup={}", self.bench_warmup).unwrap();
        writeln!(s, "bench_channels={}", self.bench_channels).unwrap();
        writeln!(s, "bench_epoch_windows={}", self.bench_epoch_windows).unwrap();
        s
    }

    pub fn synth_spec(&self) -> Result<Option<SynthSpec>, CliError> {
        match &self.data {
            Some(DataSource::Synth(path)) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                SynthSpec::from_kv(&text)
                    .map(Some)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
            }
            _ => Ok(None),
        }
    }
}
