//! Binary checkpoint format.
//!
//! ```text
//! magic        8 bytes   "SGEOCKPT"
//! version      u32 LE
//! dim          u32 LE    D
//! hidden       u32 LE    H
//! layers       u32 LE    number of linear layers
//! per layer    f64 LE    weight (out x in, row-major), then bias (out)
//! kv count     u32 LE
//! per entry    u32 LE key length, key bytes, u32 LE value length, value bytes (UTF-8)
//! ```
//!
//! The seed is stored in the key-value block under `seed`.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Linear, ScoreNet};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SGEOCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: ScoreNet,
    pub seed: u64,
    /// Schedule parameters and training metadata.
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let net = &self.net;
        let mut out = Vec::with_capacity(32 + 8 * net.num_params());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for v in [CHECKPOINT_VERSION, net.dim as u32, net.hidden as u32, net.layers.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for layer in &net.layers {
            for w in layer.weight.iter().chain(layer.bias.iter()) {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        let mut kv = self.metadata.clone();
        kv.insert("seed".into(), self.seed.to_string());
        out.extend_from_slice(&(kv.len() as u32).to_le_bytes());
        for (k, v) in &kv {
            for s in [k, v] {
                out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(malformed("bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(malformed(&format!("unsupported version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let hidden = read_u32(&mut r)? as usize;
        let n_layers = read_u32(&mut r)? as usize;
        if dim == 0 || hidden == 0 || n_layers < 2 {
            return Err(malformed("degenerate shape header"));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let fan_in = if i == 0 { dim + 1 } else { hidden };
            let fan_out = if i + 1 == n_layers { dim } else { hidden };
            let weight = read_f64s(&mut r, fan_in * fan_out)?;
            let bias = read_f64s(&mut r, fan_out)?;
            layers.push(Linear {
                weight: Array2::from_shape_vec((fan_out, fan_in), weight).expect("length checked"),
                bias: Array1::from(bias),
            });
        }
        let n_kv = read_u32(&mut r)? as usize;
        let mut metadata = BTreeMap::new();
        for _ in 0..n_kv {
            let k = read_string(&mut r)?;
            let v = read_string(&mut r)?;
            metadata.insert(k, v);
        }
        if !r.is_empty() {
            return Err(malformed("trailing bytes"));
        }
        let seed = metadata
            .remove("seed")
            .ok_or_else(|| malformed("missing seed"))?
            .parse()
            .map_err(|_| malformed("seed is not an integer"))?;
        Ok(Self { net: ScoreNet::from_layers(layers)?, seed, metadata })
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &ckpt.to_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

fn malformed(detail: &str) -> Error {
    Error::Format { what: "checkpoint", detail: detail.to_string() }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| malformed("truncated"))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s(r: &mut &[u8], n: usize) -> Result<Vec<f64>> {
    if r.len() < 8 * n {
        return Err(malformed("truncated parameters"));
    }
    let (head, tail) = r.split_at(8 * n);
    *r = tail;
    Ok(head.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn read_string(r: &mut &[u8]) -> Result<String> {
    let n = read_u32(r)? as usize;
    if r.len() < n {
        return Err(malformed("truncated metadata"));
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    String::from_utf8(head.to_vec()).map_err(|_| malformed("metadata is not UTF-8"))
}
