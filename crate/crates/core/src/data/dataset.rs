use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::DataError;

/// A multivariate series held as a row-major `[T, N]` table.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// Row-major, `len() * channels()` values.
    pub values: Vec<f64>,
    /// One opaque label per time step.
    pub timestamps: Vec<String>,
    pub columns: Vec<String>,
    pub granularity: String,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<String>,
        timestamps: Vec<String>,
        values: Vec<f64>,
        granularity: impl Into<String>,
    ) -> Result<Self, DataError> {
        if columns.is_empty() {
            return Err(DataError::Shape(
                "dataset needs at least one variate".into(),
            ));
        }
        if values.len() != timestamps.len() * columns.len() {
            return Err(DataError::Shape(format!(
                "{} values for {} steps x {} variates",
                values.len(),
                timestamps.len(),
                columns.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Missing {
                row: i / columns.len() + 1,
                column: columns[i % columns.len()].clone(),
            });
        }
        Ok(Self {
            name: name.into(),
            values,
            timestamps,
            columns,
            granularity: granularity.into(),
        })
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Number of variates `N`.
    pub fn channels(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let n = self.channels();
        &self.values[t * n..(t + 1) * n]
    }

    /// One variate as a contiguous series.
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(c)
            .step_by(self.channels())
            .copied()
            .collect()
    }

    /// Writes the table in the same layout [`read_csv`] accepts.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), DataError> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| DataError::Csv(e.to_string());
        let header = std::iter::once("date").chain(self.columns.iter().map(String::as_str));
        out.write_record(header).map_err(csv_err)?;
        for (t, stamp) in self.timestamps.iter().enumerate() {
            let cells = self.row(t).iter().map(|v| format!("{v:?}"));
            out.write_record(std::iter::once(stamp.clone()).chain(cells))
                .map_err(csv_err)?;
        }
        out.flush().map_err(|e| DataError::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Reads a CSV whose first column is a timestamp and whose remaining columns
/// are numeric variates. The dataset is named after the file stem.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(&name, file)
}

fn granularity_of(name: &str) -> &'static str {
    if name.starts_with("ETTh") {
        "1h"
    } else if name.starts_with("ETTm") {
        "15min"
    } else {
        "unknown"
    }
}

pub fn read_csv<R: Read>(name: &str, reader: R) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(DataError::Csv(format!(
            "expected a date column and at least one variate, found {} column(s)",
            header.len()
        )));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DataError::Csv(format!("row {row}: {e}")))?;
        timestamps.push(record[0].to_string());
        for (cell, column) in record.iter().skip(1).zip(&columns) {
            if cell.is_empty()
                || cell.eq_ignore_ascii_case("nan")
                || cell.eq_ignore_ascii_case("na")
            {
                return Err(DataError::Missing {
                    row,
                    column: column.clone(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                row,
                column: column.clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::Missing {
                    row,
                    column: column.clone(),
                });
            }
            values.push(v);
        }
    }
    Dataset::new(name, columns, timestamps, values, granularity_of(name))
}
