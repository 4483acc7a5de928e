//! Binary checkpoint format for named networks plus optimizer state.
//!
//! Layout (all little-endian):
//!   magic "DSLRCKPT", u32 version, u8 phase, u64 lineage, u32 n_groups,
//!   groups: { u16 name_len, name, u8 trainable, u32 n_layers,
//!             layers: { u8 act, f64 act_param, u32 in, u32 out, w[], b[] } },
//!   u8 has_optimizer,
//!   optimizer: { f64 lr, beta1, beta2, eps, weight_decay, u32 n_slots,
//!                slots: { u16 name_len, name, u64 t, u32 n_layers,
//!                         layers: { u32 w_len, mw[], vw[], u32 b_len, mb[], vb[] } } }

use std::collections::BTreeMap;
use std::path::Path;

use super::adam::{Adam, AdamConfig, GroupSlot, LayerSlot};
use super::{Activation, DenseLayer, Mlp, NnError};
use crate::fsutil::atomic_write;

pub const CKPT_MAGIC: &[u8; 8] = b"DSLRCKPT";
pub const CKPT_VERSION: u32 = 1;

/// Everything needed to resume or run a trained pipeline stage.
pub struct Checkpoint {
    /// Training stage marker; the pipeline layer assigns the meaning.
    pub phase: u8,
    /// Count of adaptation epochs already applied, for seed continuity.
    pub lineage: u64,
    pub groups: Vec<Mlp>,
    pub optimizer: Option<Adam>,
}

fn act_code(act: Activation) -> (u8, f64) {
    match act {
        Activation::Identity => (0, 0.0),
        Activation::Relu => (1, 0.0),
        Activation::LeakyRelu(s) => (2, s),
        Activation::Sigmoid => (3, 0.0),
    }
}

fn act_from_code(code: u8, param: f64) -> Result<Activation, NnError> {
    match code {
        0 => Ok(Activation::Identity),
        1 => Ok(Activation::Relu),
        2 => Ok(Activation::LeakyRelu(param)),
        3 => Ok(Activation::Sigmoid),
        other => Err(NnError::Format(format!("unknown activation code {other}"))),
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.push(ckpt.phase);
    out.extend_from_slice(&ckpt.lineage.to_le_bytes());
    out.extend_from_slice(&(ckpt.groups.len() as u32).to_le_bytes());
    for mlp in &ckpt.groups {
        let name = mlp.name().as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(u8::from(mlp.trainable()));
        out.extend_from_slice(&(mlp.layers.len() as u32).to_le_bytes());
        for layer in &mlp.layers {
            let (code, param) = act_code(layer.act);
            out.push(code);
            out.extend_from_slice(&param.to_le_bytes());
            out.extend_from_slice(&(layer.in_dim as u32).to_le_bytes());
            out.extend_from_slice(&(layer.out_dim as u32).to_le_bytes());
            for v in layer.w.iter().chain(&layer.b) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    match &ckpt.optimizer {
        None => out.push(0),
        Some(adam) => {
            out.push(1);
            let cfg = adam.config();
            for v in [cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&(adam.slots.len() as u32).to_le_bytes());
            for (name, slot) in &adam.slots {
                out.extend_from_slice(&(name.len() as u16).to_le_bytes());
                out.extend_from_slice(name.as_bytes());
                out.extend_from_slice(&slot.t.to_le_bytes());
                out.extend_from_slice(&(slot.layers.len() as u32).to_le_bytes());
                for ls in &slot.layers {
                    out.extend_from_slice(&(ls.mw.len() as u32).to_le_bytes());
                    for v in ls.mw.iter().chain(&ls.vw) {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                    out.extend_from_slice(&(ls.mb.len() as u32).to_le_bytes());
                    for v in ls.mb.iter().chain(&ls.vb) {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.buf.len() {
            return Err(NnError::Format("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, NnError> {
        let bytes = self.take(n * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn name(&mut self) -> Result<String, NnError> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| NnError::Format("non-utf8 group name".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, NnError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(8)? != CKPT_MAGIC {
        return Err(NnError::Format("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != CKPT_VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let phase = cur.u8()?;
    let lineage = cur.u64()?;
    let n_groups = cur.u32()? as usize;
    let mut groups = Vec::with_capacity(n_groups);
    for _ in 0..n_groups {
        let name = cur.name()?;
        let trainable = cur.u8()? != 0;
        let n_layers = cur.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let code = cur.u8()?;
            let param = cur.f64()?;
            let act = act_from_code(code, param)?;
            let in_dim = cur.u32()? as usize;
            let out_dim = cur.u32()? as usize;
            if in_dim == 0 || out_dim == 0 {
                return Err(NnError::Format("zero-sized layer".into()));
            }
            let w = cur.f64s(in_dim * out_dim)?;
            let b = cur.f64s(out_dim)?;
            layers.push(DenseLayer::from_params(in_dim, out_dim, act, w, b)?);
        }
        if layers.is_empty() {
            return Err(NnError::Format(format!("group {name} has no layers")));
        }
        groups.push(Mlp::from_layers(name, layers, trainable));
    }
    let optimizer = if cur.u8()? != 0 {
        let cfg = AdamConfig {
            lr: cur.f64()?,
            beta1: cur.f64()?,
            beta2: cur.f64()?,
            eps: cur.f64()?,
            weight_decay: cur.f64()?,
        };
        let n_slots = cur.u32()? as usize;
        let mut slots = BTreeMap::new();
        for _ in 0..n_slots {
            let name = cur.name()?;
            let t = cur.u64()?;
            let n_layers = cur.u32()? as usize;
            let mut layers = Vec::with_capacity(n_layers);
            for _ in 0..n_layers {
                let w_len = cur.u32()? as usize;
                let mw = cur.f64s(w_len)?;
                let vw = cur.f64s(w_len)?;
                let b_len = cur.u32()? as usize;
                let mb = cur.f64s(b_len)?;
                let vb = cur.f64s(b_len)?;
                layers.push(LayerSlot { mw, vw, mb, vb });
            }
            slots.insert(name, GroupSlot { t, layers });
        }
        Some(Adam::from_parts(cfg, slots))
    } else {
        None
    };
    if cur.pos != bytes.len() {
        return Err(NnError::Format("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint {
        phase,
        lineage,
        groups,
        optimizer,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NnError> {
    atomic_write(path, &encode_checkpoint(ckpt))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    decode_checkpoint(&std::fs::read(path)?)
}
