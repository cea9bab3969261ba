//! Binary checkpoint format.
//!
//! ```text
//! "DSCK" | version u32 | vocab_size, embed_dim, hidden, pooled_dim, max_len: u32
//! then per tensor: name_len u16 | name (UTF-8) | rows u32 | cols u32 | rows·cols × f64
//! ```
//!
//! All integers and floats are little-endian. The twelve model tensors come
//! first in [`TENSOR_NAMES`] order; any further tensors (optimizer moments,
//! training position) follow and are returned as extras.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelDims, ModelParams, TENSOR_NAMES};
use crate::numerics::{Matrix, NamedTensors, ParamSet};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub extras: NamedTensors,
}

impl Checkpoint {
    pub fn extra(&self, name: &str) -> Option<&Matrix> {
        self.extras.0.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

fn put_tensor(out: &mut Vec<u8>, name: &str, m: &Matrix) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(params: &ModelParams, extras: &NamedTensors) -> Vec<u8> {
    let d = params.dims;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [d.vocab_size, d.embed_dim, d.hidden, d.pooled_dim, d.max_len] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for (name, m) in params.tensors() {
        put_tensor(&mut out, name, m);
    }
    for (name, m) in &extras.0 {
        put_tensor(&mut out, name, m);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                offset: self.pos,
                message: format!("truncated while reading {what}"),
            }),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<(String, Matrix)> {
        let start = self.pos;
        let len = self.u16("tensor name length")? as usize;
        let name = std::str::from_utf8(self.take(len, "tensor name")?)
            .map_err(|_| Error::Format {
                offset: start + 2,
                message: "tensor name is not UTF-8".into(),
            })?
            .to_string();
        let rows = self.u32("tensor rows")? as usize;
        let cols = self.u32("tensor cols")? as usize;
        let data_start = self.pos;
        let count = rows.checked_mul(cols).and_then(|c| c.checked_mul(8));
        let raw = match count {
            Some(c) => self.take(c, &name)?,
            None => {
                return Err(Error::Format {
                    offset: data_start,
                    message: format!("{name}: shape {rows}x{cols} overflows"),
                })
            }
        };
        let mut values = Vec::with_capacity(rows * cols);
        for (i, chunk) in raw.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Format {
                    offset: data_start + 8 * i,
                    message: format!("{name}: non-finite value"),
                });
            }
            values.push(v);
        }
        Ok((name, Matrix::new(rows, cols, values)?))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic, expected \"DSCK\"".into(),
        });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let mut d = [0usize; 5];
    for v in d.iter_mut() {
        *v = r.u32("dims")? as usize;
    }
    let dims = ModelDims {
        vocab_size: d[0],
        embed_dim: d[1],
        hidden: d[2],
        pooled_dim: d[3],
        max_len: d[4],
    };
    let mut tensors = Vec::with_capacity(TENSOR_NAMES.len());
    for expected in TENSOR_NAMES {
        let at = r.pos;
        let (name, m) = r.tensor()?;
        if name != expected {
            return Err(Error::Format {
                offset: at,
                message: format!("expected tensor {expected}, found {name}"),
            });
        }
        tensors.push(m);
    }
    let params = ModelParams::from_tensors(dims, tensors)?;
    let mut extras = Vec::new();
    while r.pos < bytes.len() {
        extras.push(r.tensor()?);
    }
    Ok(Checkpoint {
        params,
        extras: NamedTensors(extras),
    })
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, extras: &NamedTensors) -> Result<()> {
    fs::write(path, encode_checkpoint(params, extras)).map_err(|e| Error::io(path, e))
}

pub fn save_params(path: &Path, params: &ModelParams) -> Result<()> {
    save_checkpoint(path, params, &NamedTensors::default())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
