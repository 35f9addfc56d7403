use crate::data::{split, windows, Dataset, Scaler, SeriesWindow, SplitScheme, Splits};

use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// A dataset standardized with its training statistics and cut into
/// chronological splits for one `(lookback, horizon)` pair.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub name: String,
    /// Row-major `[T, N]`, standardized.
    pub values: Vec<f64>,
    pub channels: usize,
    pub splits: Splits,
    pub scaler: Scaler,
    pub lookback: usize,
    pub horizon: usize,
}

impl PreparedData {
    pub fn new(
        dataset: &Dataset,
        scheme: SplitScheme,
        lookback: usize,
        horizon: usize,
    ) -> Result<Self, TrainError> {
        let splits = split(dataset.len(), scheme, lookback, horizon)?;
        let scaler = Scaler::fit(&dataset.values, dataset.channels(), splits.train.clone())?;
        Ok(Self {
            name: dataset.name.clone(),
            values: scaler.apply(&dataset.values),
            channels: dataset.channels(),
            splits,
            scaler,
            lookback,
            horizon,
        })
    }

    /// Stride-1 windows of one split, in chronological order.
    pub fn windows(&self, which: Split) -> Result<Vec<SeriesWindow<'_>>, TrainError> {
        let range = match which {
            Split::Train => self.splits.train.clone(),
            Split::Val => self.splits.val.clone(),
            Split::Test => self.splits.test.clone(),
        };
        let ws = windows(
            &self.values,
            self.channels,
            range,
            self.lookback,
            self.horizon,
            1,
        )?;
        if ws.is_empty() {
            return Err(TrainError::EmptySplit(which.as_str()));
        }
        Ok(ws)
    }
}
