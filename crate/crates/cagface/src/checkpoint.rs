//! Checkpoint serialization.
//!
//! Layout (all integers little-endian):
//!   magic "CAGF" | version u32 | meta_len u32 | meta (TOML, UTF-8)
//!   | tensor_count u32 | tensors
//! Each tensor: name_len u32 | name | dims 4 x u32 | values as f32 LE.
//! Weights are stored as "<param>.w", biases as "<param>.b".

use crate::error::{Error, Result};
use crate::graph::ParamSet;
use crate::net::{ModelKind, NetworkConfig};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"CAGF";
pub const VERSION: u32 = 1;

/// Everything about a run that is not a weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub config: NetworkConfig,
    pub step: u64,
    #[serde(default)]
    pub best_val_psnr: Option<f64>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn save<T: Scalar>(path: &Path, meta: &CheckpointMeta, params: &ParamSet<T>) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let meta_toml =
        toml::to_string(meta).map_err(|e| bad(format!("meta encode failed: {e}")))?;
    buf.extend_from_slice(&(meta_toml.len() as u32).to_le_bytes());
    buf.extend_from_slice(meta_toml.as_bytes());

    let tensor_count = params.iter().count() * 2;
    buf.extend_from_slice(&(tensor_count as u32).to_le_bytes());
    for (_, e) in params.iter() {
        let c = &e.conv;
        write_tensor(
            &mut buf,
            &format!("{}.w", e.name),
            [c.kh, c.kw, c.c_in, c.c_out],
            &c.weights,
        );
        write_tensor(&mut buf, &format!("{}.b", e.name), [c.c_out, 1, 1, 1], &c.bias);
    }

    let tmp = path.with_extension("tmp");
    std::fs::File::create(&tmp)?.write_all(&buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_tensor<T: Scalar>(buf: &mut Vec<u8>, name: &str, dims: [usize; 4], values: &[T]) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    for d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in values {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(bad(format!(
                "truncated checkpoint: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Read the header and meta only.
pub fn peek_meta(path: &Path) -> Result<CheckpointMeta> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    read_meta(&mut r)
}

fn read_meta(r: &mut Reader) -> Result<CheckpointMeta> {
    if r.take(4)? != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version} (expected {VERSION})")));
    }
    let meta_len = r.u32()? as usize;
    let meta_str = std::str::from_utf8(r.take(meta_len)?)
        .map_err(|_| bad("meta block is not valid UTF-8"))?;
    toml::from_str(meta_str).map_err(|e| bad(format!("meta decode failed: {e}")))
}

/// Load weights into an already-built parameter set. Every stored tensor
/// must match a parameter by name and shape, and every parameter must be
/// covered.
pub fn load_into<T: Scalar>(path: &Path, params: &mut ParamSet<T>) -> Result<CheckpointMeta> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    let meta = read_meta(&mut r)?;

    let tensor_count = r.u32()? as usize;
    let expected = params.iter().count() * 2;
    if tensor_count != expected {
        return Err(bad(format!(
            "checkpoint holds {tensor_count} tensors, model expects {expected}"
        )));
    }
    let mut filled = 0usize;
    for _ in 0..tensor_count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| bad("tensor name is not valid UTF-8"))?
            .to_string();
        let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let len = dims.iter().product::<usize>();
        let raw = r.take(len * 4)?;
        let (base, field) = name
            .rsplit_once('.')
            .ok_or_else(|| bad(format!("malformed tensor name {name:?}")))?;
        let entry = params
            .iter_mut()
            .find(|(_, e)| e.name == base)
            .map(|(_, e)| e)
            .ok_or_else(|| bad(format!("checkpoint tensor {name:?} has no matching parameter")))?;
        let dst: &mut Vec<T> = match field {
            "w" => {
                let c = &entry.conv;
                if dims != [c.kh, c.kw, c.c_in, c.c_out] {
                    return Err(bad(format!(
                        "shape mismatch for {name:?}: stored {dims:?}, model wants {:?}",
                        [c.kh, c.kw, c.c_in, c.c_out]
                    )));
                }
                &mut entry.conv.weights
            }
            "b" => {
                if dims != [entry.conv.c_out, 1, 1, 1] {
                    return Err(bad(format!("shape mismatch for {name:?}: stored {dims:?}")));
                }
                &mut entry.conv.bias
            }
            other => return Err(bad(format!("unknown tensor field {other:?} in {name:?}"))),
        };
        for (i, chunk) in raw.chunks_exact(4).enumerate() {
            dst[i] = T::of_f64(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
        }
        filled += 1;
    }
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes after last tensor", bytes.len() - r.pos)));
    }
    debug_assert_eq!(filled, tensor_count);
    Ok(meta)
}
