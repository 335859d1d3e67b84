//! Parameter checkpoints.
//!
//! Layout (all integers u32 little-endian):
//! `"JPTW" | version=1 | tensor count | per tensor: name length, name bytes,
//! rank, dims..., f64 little-endian data`.

use std::fs;
use std::path::Path;

use crate::binio::{put_u32, Reader};
use crate::error::{Error, Result};

use super::{ParamSet, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"JPTW";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + params.numel() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u32(&mut out, params.len() as u32);
    for (name, t) in params.iter() {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len() as u32);
        for &d in t.shape() {
            put_u32(&mut out, d as u32);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamSet> {
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    r.expect_u32(CHECKPOINT_VERSION, "checkpoint version")?;
    let count = r.u32("tensor count")?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let at = r.offset();
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.bytes(name_len, "tensor name")?)
            .map_err(|_| Error::Parse {
                offset: at,
                msg: "tensor name is not UTF-8".into(),
            })?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let numel: usize = shape.iter().product();
        if numel.saturating_mul(8) > r.remaining() {
            return Err(Error::Parse {
                offset: r.offset(),
                msg: format!("truncated file: tensor {name} needs {} bytes", numel * 8),
            });
        }
        let data = (0..numel).map(|_| r.f64("tensor data")).collect::<Result<Vec<_>>>()?;
        let t = Tensor::new(shape, data).map_err(|e| Error::Parse {
            offset: at,
            msg: format!("tensor {name}: {e}"),
        })?;
        params.insert(name, t).map_err(|e| Error::Parse {
            offset: at,
            msg: e.to_string(),
        })?;
    }
    if r.remaining() != 0 {
        return Err(Error::Parse {
            offset: r.offset(),
            msg: format!("{} trailing bytes", r.remaining()),
        });
    }
    Ok(params)
}

pub fn write_checkpoint(path: impl AsRef<Path>, params: &ParamSet) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ParamSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
