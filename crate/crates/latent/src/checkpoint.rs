//! Binary checkpoints: named f32 tensors with frozen/trainable flags and
//! the stage label.
//!
//! Layout (little endian): `b"LCKP"`, `u32` version, `u32` label length,
//! label bytes, `u32` activation (0 SiLU, 1 identity), `u32` entry count,
//! then per entry `u32` name length, name, `u8` trainable flag, `u32` length,
//! `length` f32 values.

use std::path::Path;

use crate::model::{param_group, Activation, ParamMap, ToyModel, Trainable};
use crate::{LatentError, Result};

const MAGIC: &[u8; 4] = b"LCKP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: String,
    pub model: ToyModel,
    /// Names of parameters marked trainable.
    pub trainable: Vec<String>,
}

pub fn write_checkpoint(model: &ToyModel, stage: &str, trainable: &Trainable) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(stage.len() as u32).to_le_bytes());
    out.extend_from_slice(stage.as_bytes());
    let act: u32 = match model.activation {
        Activation::Silu => 0,
        Activation::Identity => 1,
    };
    out.extend_from_slice(&act.to_le_bytes());
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (name, values) in &model.params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(trainable.contains(param_group(name)) as u8);
        out.extend_from_slice(&(values.len() as u32).to_le_bytes());
        for v in values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(LatentError::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| LatentError::Checkpoint("name is not UTF-8".into()))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(LatentError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(LatentError::Checkpoint(format!("unsupported version {version}")));
    }
    let stage = r.string()?;
    let activation = match r.u32()? {
        0 => Activation::Silu,
        1 => Activation::Identity,
        a => return Err(LatentError::Checkpoint(format!("unknown activation {a}"))),
    };
    let count = r.u32()?;
    let mut params = ParamMap::new();
    let mut trainable = Vec::new();
    for _ in 0..count {
        let name = r.string()?;
        let flag = r.take(1)?[0];
        let n = r.u32()? as usize;
        let data = r.take(
            n.checked_mul(4)
                .ok_or(LatentError::Checkpoint("length overflow".into()))?,
        )?;
        let values = data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        if flag == 1 {
            trainable.push(name.clone());
        }
        params.insert(name, values);
    }
    // Every expected parameter must be present with the right length.
    let reference = ToyModel::new(0);
    for (name, v) in &reference.params {
        match params.get(name) {
            Some(p) if p.len() == v.len() => {}
            _ => {
                return Err(LatentError::Checkpoint(format!(
                    "parameter {name} missing or mis-sized"
                )))
            }
        }
    }
    Ok(Checkpoint {
        stage,
        model: ToyModel { params, activation },
        trainable,
    })
}

pub fn save_checkpoint(path: &Path, model: &ToyModel, stage: &str, trainable: &Trainable) -> Result<()> {
    std::fs::write(path, write_checkpoint(model, stage, trainable))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(&std::fs::read(path)?)
}
