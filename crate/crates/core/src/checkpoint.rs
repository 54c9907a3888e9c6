//! Checkpoint format: versioned header with the model configuration,
//! followed by named parameter blobs (name, dtype, shape, little-endian
//! data).
//!
//! ```text
//! magic "SDCK", version u8
//! cf, cy, cm, ch, flow_ch: u32 BE
//! param_count: u32 BE
//! per parameter:
//!   name_len u16 BE, name utf-8
//!   dtype u8 (0 = f32), ndim u8 (3), dims 3 x u32 BE
//!   data: numel x f32 LE
//! ```

use crate::config::ModelConfig;
use crate::error::{CodecError, Result};
use crate::model::SddcModel;
use crate::tensor::Tensor;
use std::fs;
use std::path::Path;

const MAGIC: [u8; 4] = *b"SDCK";
const VERSION: u8 = 1;

pub fn save(model: &SddcModel, path: &Path) -> Result<()> {
    let store = &model.store;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    for v in [
        model.cfg.cf,
        model.cfg.cy,
        model.cfg.cm,
        model.cfg.ch,
        model.cfg.flow_ch,
    ] {
        out.extend_from_slice(&(v as u32).to_be_bytes());
    }
    out.extend_from_slice(&(store.len() as u32).to_be_bytes());
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_be_bytes());
        out.extend_from_slice(name);
        out.push(0); // f32
        out.push(3);
        let (c, h, w) = store.value(id).shape();
        for d in [c, h, w] {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        for &v in store.value(id).data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| CodecError::io(path, e))
}

pub fn load(path: &Path) -> Result<SddcModel> {
    if !path.exists() {
        return Err(CodecError::MissingCheckpoint(path.to_path_buf()));
    }
    let data = fs::read(path).map_err(|e| CodecError::io(path, e))?;
    let corrupt = |m: &str| CodecError::CorruptCheckpoint(format!("{}: {m}", path.display()));
    if data.len() < 29 || data[0..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    if data[4] != VERSION {
        return Err(corrupt("unsupported version"));
    }
    let u32_at = |pos: usize| -> usize {
        u32::from_be_bytes([data[pos], data[pos + 1], data[pos + 2], data[pos + 3]]) as usize
    };
    let cfg = ModelConfig {
        cf: u32_at(5),
        cy: u32_at(9),
        cm: u32_at(13),
        ch: u32_at(17),
        flow_ch: u32_at(21),
    };
    let count = u32_at(25);
    let mut model = SddcModel::new(cfg, 0);
    if count != model.store.len() {
        return Err(corrupt("parameter count mismatch"));
    }
    let mut pos = 29;
    for _ in 0..count {
        if pos + 2 > data.len() {
            return Err(corrupt("truncated name length"));
        }
        let nlen = u16::from_be_bytes([data[pos], data[pos + 1]]) as usize;
        pos += 2;
        if pos + nlen + 2 + 12 > data.len() {
            return Err(corrupt("truncated parameter header"));
        }
        let name = std::str::from_utf8(&data[pos..pos + nlen])
            .map_err(|_| corrupt("bad parameter name"))?
            .to_string();
        pos += nlen;
        if data[pos] != 0 || data[pos + 1] != 3 {
            return Err(corrupt("unsupported dtype or rank"));
        }
        pos += 2;
        let c = u32_at(pos);
        let h = u32_at(pos + 4);
        let w = u32_at(pos + 8);
        pos += 12;
        let numel = c * h * w;
        if pos + numel * 4 > data.len() {
            return Err(corrupt("truncated parameter data"));
        }
        let mut vals = Vec::with_capacity(numel);
        for i in 0..numel {
            let o = pos + i * 4;
            vals.push(f32::from_le_bytes([
                data[o],
                data[o + 1],
                data[o + 2],
                data[o + 3],
            ]));
        }
        pos += numel * 4;
        let id = model
            .store
            .lookup(&name)
            .ok_or_else(|| corrupt(&format!("unknown parameter {name}")))?;
        if model.store.value(id).shape() != (c, h, w) {
            return Err(corrupt(&format!("shape mismatch for {name}")));
        }
        model.store.set_value(&name, Tensor::from_vec(c, h, w, vals));
    }
    if pos != data.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(model)
}
