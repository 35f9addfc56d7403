use std::ops::Range;

use super::DataError;

/// Train/val/test end points of the hourly ETT datasets: 12, 4 and 4
/// months of hourly steps.
pub const ETTH_BORDERS: [usize; 3] = [12 * 30 * 24, 16 * 30 * 24, 20 * 30 * 24];
/// The same months at 15-minute resolution.
pub const ETTM_BORDERS: [usize; 3] = [12 * 30 * 96, 16 * 30 * 96, 20 * 30 * 96];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitScheme {
    EttHourly,
    EttMinute,
    /// Chronological train/val/test fractions. Train and test lengths are
    /// floored; validation takes the remainder.
    Ratio {
        train: f64,
        test: f64,
    },
}

impl SplitScheme {
    pub const DEFAULT_RATIO: SplitScheme = SplitScheme::Ratio {
        train: 0.7,
        test: 0.2,
    };

    /// Fixed-length splits for the ETT family, ratio splits otherwise.
    pub fn for_dataset(name: &str) -> Self {
        if name.starts_with("ETTh") {
            Self::EttHourly
        } else if name.starts_with("ETTm") {
            Self::EttMinute
        } else {
            Self::DEFAULT_RATIO
        }
    }
}

/// Row ranges of each split.
///
/// `val` and `test` start `lookback` rows before their first target so the
/// first window's history comes from the preceding split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

pub fn split(
    len: usize,
    scheme: SplitScheme,
    lookback: usize,
    horizon: usize,
) -> Result<Splits, DataError> {
    let need = lookback + horizon;
    if len <= need {
        return Err(DataError::TooShort(format!(
            "series of length {len} is too short for lookback {lookback} + horizon {horizon}"
        )));
    }
    let [train_end, val_end, test_end] = match scheme {
        SplitScheme::EttHourly => ETTH_BORDERS,
        SplitScheme::EttMinute => ETTM_BORDERS,
        SplitScheme::Ratio { train, test } => {
            if !(train > 0.0 && test > 0.0 && train + test < 1.0) {
                return Err(DataError::Shape(format!(
                    "split ratios train={train} test={test} must be positive with room for validation"
                )));
            }
            let n_train = (len as f64 * train).floor() as usize;
            let n_test = (len as f64 * test).floor() as usize;
            [n_train, len - n_test, len]
        }
    };
    if test_end > len {
        return Err(DataError::TooShort(format!(
            "fixed split needs {test_end} steps, series has {len}"
        )));
    }
    let splits = Splits {
        train: 0..train_end,
        val: train_end.saturating_sub(lookback)..val_end,
        test: val_end.saturating_sub(lookback)..test_end,
    };
    for (label, r) in [
        ("train", &splits.train),
        ("val", &splits.val),
        ("test", &splits.test),
    ] {
        if r.len() < need {
            return Err(DataError::TooShort(format!(
                "{label} split {r:?} holds {} steps, fewer than lookback {lookback} + horizon {horizon}",
                r.len()
            )));
        }
    }
    Ok(splits)
}
