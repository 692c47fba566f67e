//! Named-tensor checkpoints in the TRMF container.
//!
//! Payload: `u32 count`, then per tensor `u32 name_len`, UTF-8 name,
//! `u32 ndim`, `ndim × u32` dims, `f32` data. Hyperparameters ride along as
//! `meta.*` tensors so a checkpoint is self-describing.

use std::collections::HashMap;
use std::path::Path;

use super::params::{AttentionKind, FusionKind, ModelConfig, ModelParams};
use super::tensor::Mat;
use super::ModelError;
use crate::trmf::{write_atomic, Modality, Reader, TrmfError, Writer};

const META_CONFIG: &str = "meta.config";

fn config_tensor(c: &ModelConfig) -> Vec<f32> {
    let fusion = match c.fusion {
        FusionKind::Gated => 0,
        FusionKind::Concat => 1,
    };
    let attention = match c.attention {
        AttentionKind::Divided => 0,
        AttentionKind::Standard => 1,
    };
    [
        c.d_text,
        c.d_audio,
        c.d_model,
        c.layers,
        c.heads,
        c.ff_width,
        c.window,
        c.action_dim,
        fusion,
        attention,
    ]
    .iter()
    .map(|v| *v as f32)
    .collect()
}

fn config_from_tensor(v: &[f32]) -> Result<ModelConfig, ModelError> {
    if v.len() != 10 || v.iter().any(|x| *x < 0.0 || x.fract() != 0.0) {
        return Err(ModelError::Checkpoint("malformed meta.config".into()));
    }
    let u = |i: usize| v[i] as usize;
    let config = ModelConfig {
        d_text: u(0),
        d_audio: u(1),
        d_model: u(2),
        layers: u(3),
        heads: u(4),
        ff_width: u(5),
        window: u(6),
        action_dim: u(7),
        fusion: match u(8) {
            0 => FusionKind::Gated,
            1 => FusionKind::Concat,
            _ => return Err(ModelError::Checkpoint("unknown fusion kind".into())),
        },
        attention: match u(9) {
            0 => AttentionKind::Divided,
            1 => AttentionKind::Standard,
            _ => return Err(ModelError::Checkpoint("unknown attention kind".into())),
        },
    };
    config.validate()?;
    Ok(config)
}

pub fn encode_checkpoint(params: &ModelParams<f32>) -> Vec<u8> {
    let mut tensors: Vec<(String, Vec<u32>, &[f32])> = Vec::new();
    let meta = config_tensor(&params.config);
    tensors.push((META_CONFIG.into(), vec![meta.len() as u32], &meta));
    params.for_each(|name, m| {
        let dims = if m.rows == 1 {
            vec![m.cols as u32]
        } else {
            vec![m.rows as u32, m.cols as u32]
        };
        tensors.push((name.to_string(), dims, &m.data));
    });
    let mut w = Writer::new(Modality::Checkpoint);
    w.u32(tensors.len() as u32);
    for (name, dims, data) in &tensors {
        w.u32(name.len() as u32);
        w.bytes(name.as_bytes());
        w.u32(dims.len() as u32);
        for d in dims {
            w.u32(*d);
        }
        w.f32s(data);
    }
    w.finish()
}

pub fn decode_checkpoint(data: &[u8]) -> Result<ModelParams<f32>, ModelError> {
    let mut r = Reader::open(data, Modality::Checkpoint)?;
    let count = r.u32()? as usize;
    let mut tensors: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.bytes(len)?.to_vec())
            .map_err(|_| ModelError::Checkpoint("tensor name is not UTF-8".into()))?;
        let ndim = r.u32()? as usize;
        if ndim > 8 {
            return Err(ModelError::Checkpoint(format!("{name}: {ndim} dimensions")));
        }
        let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = dims.iter().product::<usize>();
        if n > r.remaining() / 4 {
            return Err(ModelError::Checkpoint(format!("{name}: {n} values exceed the payload")));
        }
        let values = r.f32s(n)?;
        if tensors.insert(name.clone(), (dims, values)).is_some() {
            return Err(ModelError::Checkpoint(format!("duplicate tensor {name}")));
        }
    }
    r.finish()?;
    let (_, meta) = tensors
        .remove(META_CONFIG)
        .ok_or_else(|| ModelError::Checkpoint("missing meta.config".into()))?;
    let config = config_from_tensor(&meta)?;
    let mut params = ModelParams::<f32>::zeros(config)?;
    let mut err = None;
    params.for_each_mut(|name, m| {
        if err.is_some() {
            return;
        }
        match tensors.remove(name) {
            Some((dims, values)) if dims.iter().product::<usize>() == m.len() && values.len() == m.len() => {
                *m = Mat::from_vec(m.rows, m.cols, values);
            }
            Some((dims, _)) => {
                err = Some(format!("{name}: shape {dims:?} does not match {}×{}", m.rows, m.cols))
            }
            None => err = Some(format!("missing tensor {name}")),
        }
    });
    if let Some(e) = err {
        return Err(ModelError::Checkpoint(e));
    }
    if let Some(extra) = tensors.keys().find(|k| !k.starts_with("meta.")) {
        return Err(ModelError::Checkpoint(format!("unexpected tensor {extra}")));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams<f32>, path: &Path) -> Result<(), ModelError> {
    Ok(write_atomic(path, &encode_checkpoint(params))?)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams<f32>, ModelError> {
    let data = std::fs::read(path).map_err(|e| ModelError::Trmf(TrmfError::Io(e)))?;
    decode_checkpoint(&data)
}
