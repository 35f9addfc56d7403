//! Flat binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CPNT"  u32 version  u64 param_count
//! per parameter:
//!   u32 name_len  name (UTF-8)  u32 rank  u64 extent * rank  f64 value * numel
//! ```

use std::io::{Read, Write};

use super::{NnError, ParamStore};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CPNT";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, params: &ParamStore) -> Result<(), NnError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for (name, tensor) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
        for &extent in tensor.shape() {
            w.write_all(&(extent as u64).to_le_bytes())?;
        }
        for v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamStore, NnError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::BadCheckpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NnError::BadCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let count = read_u64(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|e| NnError::BadCheckpoint(format!("parameter name: {e}")))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| read_u64(&mut r).map(|e| e as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        let tensor = Tensor::from_vec(&shape, data)
            .map_err(|e| NnError::BadCheckpoint(format!("{name}: {e}")))?;
        store.add(name, tensor);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(NnError::BadCheckpoint("trailing bytes".into()));
    }
    Ok(store)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, NnError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
