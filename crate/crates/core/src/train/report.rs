use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::{CpNet, ModelConfig};
use crate::nn::checkpoint::{read_checkpoint, write_checkpoint};
use crate::nn::ParamStore;

/// Wall-clock measurements, kept apart from the deterministic reports.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub epoch_seconds: Vec<f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, TrainError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), TrainError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| TrainError::Format(e.to_string()))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, TrainError> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| TrainError::Format(format!("{}: {e}", path.display())))
}

/// One CSV row per record, header from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)
            .map_err(|e| TrainError::Format(e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `<stem>.ckpt` with the parameters and `<stem>.conf` with the
/// architecture needed to rebuild them.
pub fn save_checkpoint(
    dir: &Path,
    stem: &str,
    config: &ModelConfig,
    params: &ParamStore,
) -> Result<(), TrainError> {
    let conf = dir.join(format!("{stem}.conf"));
    std::fs::write(&conf, config.to_kv()).map_err(io_err(&conf))?;
    let ckpt = dir.join(format!("{stem}.ckpt"));
    let mut w = create(&ckpt)?;
    write_checkpoint(&mut w, params)?;
    w.flush().map_err(io_err(&ckpt))
}

pub fn load_checkpoint(dir: &Path, stem: &str) -> Result<(CpNet, ParamStore), TrainError> {
    let conf = dir.join(format!("{stem}.conf"));
    let text = std::fs::read_to_string(&conf).map_err(io_err(&conf))?;
    let config = ModelConfig::from_kv(&text)?;
    let ckpt = dir.join(format!("{stem}.ckpt"));
    let file = File::open(&ckpt).map_err(io_err(&ckpt))?;
    let params = read_checkpoint(BufReader::new(file))?;
    Ok(CpNet::with_params(config, &params)?)
}
