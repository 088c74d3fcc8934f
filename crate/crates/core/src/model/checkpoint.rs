//! Binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic        4 bytes  "ESSL"
//! version      u32
//! vocab_size   u32
//! embed_dim    u32
//! hidden_dim   u32
//! num_classes  u32
//! seed         u64
//! hidden_layer u8       0 | 1
//! float_width  u8       4 (f32) | 8 (f64)
//! dropout      f64
//! param_count  u64
//! params       param_count floats of float_width bytes, in layout order
//! ```
//!
//! [`save_checkpoint`] writes 8-byte floats so `load(save(m)) == m` bit for bit;
//! [`save_checkpoint_f32`] writes the compact 4-byte variant, which rounds.

use super::{Model, ModelConfig, ParameterVector};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"ESSL";

fn header(model: &Model, float_width: u8) -> Vec<u8> {
    let cfg = model.config();
    let mut out = Vec::with_capacity(48 + model.params().len() * float_width as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for dim in [
        cfg.vocab_size,
        cfg.embed_dim,
        cfg.hidden_dim,
        cfg.num_classes,
    ] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    out.push(cfg.hidden_layer as u8);
    out.push(float_width);
    out.extend_from_slice(&cfg.dropout_rate.to_le_bytes());
    out.extend_from_slice(&(model.params().len() as u64).to_le_bytes());
    out
}

pub fn save_checkpoint(model: &Model) -> Vec<u8> {
    let mut out = header(model, 8);
    for v in model.params().values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save_checkpoint_f32(model: &Model) -> Vec<u8> {
    let mut out = header(model, 4);
    for v in model.params().values() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::Checkpoint(format!(
                "truncated: need {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let vocab_size = r.u32()? as usize;
    let embed_dim = r.u32()? as usize;
    let hidden_dim = r.u32()? as usize;
    let num_classes = r.u32()? as usize;
    let seed = r.u64()?;
    let hidden_layer = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::Checkpoint(format!("bad hidden_layer flag {other}"))),
    };
    let float_width = r.u8()?;
    let dropout_rate = r.f64()?;
    let count = r.u64()? as usize;

    let config = ModelConfig {
        vocab_size,
        embed_dim,
        hidden_dim,
        num_classes,
        dropout_rate,
        seed,
        hidden_layer,
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let layout = config.layout();
    if layout.len() != count {
        return Err(Error::Checkpoint(format!(
            "dimension mismatch: header implies {} parameters, file declares {count}",
            layout.len()
        )));
    }
    let mut values = Vec::with_capacity(count);
    match float_width {
        8 => {
            for _ in 0..count {
                values.push(r.f64()?);
            }
        }
        4 => {
            for _ in 0..count {
                values.push(f32::from_le_bytes(r.array()?) as f64);
            }
        }
        other => return Err(Error::Checkpoint(format!("bad float width {other}"))),
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Model::from_parameters(config, ParameterVector::from_values(layout, values)?)
}
