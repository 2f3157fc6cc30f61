//! Checkpoint files:
//!
//! ```text
//! magic "EHDCKPT\0", u32 version
//! u32 config length, config text (`key = value` lines, UTF-8)
//! u32 array count, then per array:
//!   u32 name length, UTF-8 name, u32 rank, u32 extents[rank], f32 data
//! ```
//!
//! Integers and floats are little-endian. Arrays keep the parameter store's
//! registration order, so a save/load round trip is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EHDCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub config: BTreeMap<String, String>,
    pub arrays: Vec<(String, Tensor<f32>)>,
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn get_bytes<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
    Ok(b)
}

pub fn write_checkpoint<W: Write>(w: &mut W, ck: &Checkpoint) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    let mut text = String::new();
    for (k, v) in &ck.config {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(Error::Format(format!("config entry {k:?} cannot be serialized")));
        }
        text.push_str(&format!("{k} = {v}\n"));
    }
    put_u32(w, text.len() as u32)?;
    w.write_all(text.as_bytes())?;
    put_u32(w, ck.arrays.len() as u32)?;
    for (name, t) in &ck.arrays {
        put_u32(w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        put_u32(w, t.shape().len() as u32)?;
        for &d in t.shape() {
            put_u32(w, d as u32)?;
        }
        let mut buf = Vec::with_capacity(t.len() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let magic = get_bytes(r, 8)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = get_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let n = get_u32(r)? as usize;
    let text = String::from_utf8(get_bytes(r, n)?).map_err(|_| Error::Format("config block is not UTF-8".into()))?;
    let mut config = BTreeMap::new();
    for line in text.lines() {
        let (k, v) = line.split_once(" = ").ok_or_else(|| Error::Format(format!("bad config line {line:?}")))?;
        config.insert(k.to_string(), v.to_string());
    }
    let count = get_u32(r)? as usize;
    let mut arrays = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let n = get_u32(r)? as usize;
        let name =
            String::from_utf8(get_bytes(r, n)?).map_err(|_| Error::Format("array name is not UTF-8".into()))?;
        let rank = get_u32(r)? as usize;
        let shape: Vec<usize> = (0..rank).map(|_| get_u32(r).map(|d| d as usize)).collect::<Result<_>>()?;
        let len: usize = shape.iter().product();
        let raw = get_bytes(r, len * 4)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("array {name}: {e}")))?;
        arrays.push((name, t));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint { config, arrays })
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        write_checkpoint(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_checkpoint(&mut BufReader::new(fs::File::open(path)?))
    }

    pub fn array(&self, name: &str) -> Option<&Tensor<f32>> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

/// Weight decay applies to everything except biases and norm gains.
pub(crate) fn decays(name: &str) -> bool {
    !(name.ends_with("bias") || name.ends_with("gain"))
}

impl ModelParams<f32> {
    /// Model config plus every stored parameter. Array names are the
    /// parameter names.
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.to_pairs().into_iter().collect(),
            arrays: self.store.iter().map(|(_, p)| (p.name.clone(), p.value.clone())).collect(),
        }
    }

    /// Loads parameters from the arrays whose names do not start with one
    /// of `skip_prefixes` (e.g. optimizer state).
    pub fn from_checkpoint(ck: &Checkpoint, skip_prefixes: &[&str]) -> Result<Self> {
        let config = ModelConfig::from_pairs(&ck.config)?;
        let mut store = ParamStore::new();
        for (name, t) in &ck.arrays {
            if skip_prefixes.iter().any(|p| name.starts_with(p)) {
                continue;
            }
            store.insert(name, t.clone(), decays(name))?;
        }
        ModelParams::from_store(&config, store)
    }
}
