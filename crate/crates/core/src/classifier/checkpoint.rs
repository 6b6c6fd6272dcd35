//! Binary model checkpoints.
//!
//! Layout (little-endian):
//!
//! | field         | type                 |
//! |---------------|----------------------|
//! | magic         | `b"CREDMLP\0"`       |
//! | version       | u32 (currently 1)    |
//! | input_dim     | u32                  |
//! | hidden1       | u32                  |
//! | hidden2       | u32                  |
//! | num_classes   | u32                  |
//! | dropout_rate  | f64                  |
//! | seed          | u64                  |
//! | preset length | u32, then UTF-8 name |
//! | tensors       | f64 × n for W1, b1, W2, b2, W3, b3 |

use std::path::Path;

use super::{Mlp, MlpArchitecture, MlpParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CREDMLP\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Mlp,
    pub seed: u64,
    pub preset: String,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let a = &self.model.arch;
        let mut out = Vec::with_capacity(64 + 8 * self.model.params.num_parameters());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for d in [a.input_dim, a.hidden1, a.hidden2, a.num_classes] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&a.dropout_rate.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.preset.len() as u32).to_le_bytes());
        out.extend_from_slice(self.preset.as_bytes());
        for t in self.model.params.tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a model checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let arch = MlpArchitecture {
            input_dim: r.u32()? as usize,
            hidden1: r.u32()? as usize,
            hidden2: r.u32()? as usize,
            num_classes: r.u32()? as usize,
            dropout_rate: r.f64()?,
        };
        arch.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        let seed = r.u64()?;
        let name_len = r.u32()? as usize;
        let preset = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("preset name is not UTF-8".into()))?;
        let mut params = MlpParams::zeros(&arch);
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = r.f64()?;
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if !params.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(Checkpoint {
            model: Mlp::new(arch, params)?,
            seed,
            preset,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    std::fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
