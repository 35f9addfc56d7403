//! Dataset ingestion, chronological splits, scaling, sliding windows and the
//! synthetic multi-sine fixture.

mod dataset;
mod scaler;
mod split;
mod synth;
mod window;

pub use dataset::{load_csv, read_csv, Dataset};
pub use scaler::{Scaler, STD_FLOOR};
pub use split::{split, SplitScheme, Splits, ETTH_BORDERS, ETTM_BORDERS};
pub use synth::{synth_generate, SynthSpec};
pub use window::{shuffled_order, windows, SeriesWindow};

use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: missing value")]
    Missing { row: usize, column: String },
    #[error("{0}")]
    TooShort(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("{0}")]
    Shape(String),
}

/// Rows `range` of a row-major `[T, N]` table.
pub fn rows(values: &[f64], channels: usize, range: Range<usize>) -> &[f64] {
    &values[range.start * channels..range.end * channels]
}
