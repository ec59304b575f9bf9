//! Binary model files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "OSCNETV15"            9 bytes
//! version                u8
//! n_classes, pixels      u32, u32
//! counts                 n_classes x u64   (training images per class)
//! norm_mode              u8
//! n2                     u32
//! sparse mode            u8   (0 = dense, 1 = top, 2 = topabs)
//! tensor                 n_classes * pixels * pixels x f64
//! mask (if sparse)       per (class, pixel): u32 length, then sorted u32 indices
//! crc32                  u32 over every preceding byte
//! ```

use std::path::Path;

use crate::data::write_file;
use crate::error::{Error, Result};
use crate::hebbian::{apply_mask, ClassWeightTensor, NormMode, NormalizedTensor, SparseMask, SparseMode};

pub const MAGIC: &[u8; 9] = b"OSCNETV15";
pub const FORMAT_VERSION: u8 = 1;

/// A stored model: the (unmasked) tensor, an optional pruning mask and the
/// per-class training counts it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub tensor: NormalizedTensor,
    pub mask: Option<SparseMask>,
    pub counts: Vec<u64>,
}

impl Model {
    /// Wraps a raw accumulator so it can be saved and normalized later.
    pub fn raw(acc: &ClassWeightTensor) -> Self {
        let tensor = NormalizedTensor::new(acc.n_classes(), acc.pixels(), NormMode::None, acc.to_f64(false))
            .expect("accumulator shape is consistent");
        Self {
            tensor,
            mask: None,
            counts: acc.counts().to_vec(),
        }
    }

    /// The tensor with the mask applied, as used for classification.
    pub fn effective(&self) -> Result<NormalizedTensor> {
        match &self.mask {
            Some(m) => apply_mask(&self.tensor, m),
            None => Ok(self.tensor.clone()),
        }
    }

    /// Recovers the integer accumulator from an unnormalized, unmasked model.
    pub fn to_accumulator(&self) -> Result<ClassWeightTensor> {
        if self.tensor.norm_mode != NormMode::None || self.mask.is_some() {
            return Err(Error::Model("not a raw accumulator (normalized or masked)".into()));
        }
        let mut weights = Vec::with_capacity(self.tensor.weights.len());
        for &w in &self.tensor.weights {
            if w.fract() != 0.0 || w.abs() > 9.0e15 {
                return Err(Error::Model(format!("non-integral accumulator entry {w}")));
            }
            weights.push(w as i64);
        }
        ClassWeightTensor::from_parts(self.tensor.n_classes, self.tensor.pixels, weights, self.counts.clone())
    }
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let t = &model.tensor;
    let mut out = Vec::with_capacity(64 + t.weights.len() * 8);
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(t.n_classes as u32).to_le_bytes());
    out.extend_from_slice(&(t.pixels as u32).to_le_bytes());
    for &c in &model.counts {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out.push(t.norm_mode.code());
    match &model.mask {
        Some(m) => {
            out.extend_from_slice(&(m.n2 as u32).to_le_bytes());
            out.push(m.mode.code());
        }
        None => {
            out.extend_from_slice(&0u32.to_le_bytes());
            out.push(0);
        }
    }
    for &w in &t.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    if let Some(m) = &model.mask {
        for list in m.lists() {
            out.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for &j in list {
                out.extend_from_slice(&j.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
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
            .ok_or(Error::Length {
                expected: self.pos.saturating_add(n),
                actual: self.bytes.len(),
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < MAGIC.len() + 5 {
        return Err(Error::Length {
            expected: MAGIC.len() + 5,
            actual: bytes.len(),
        });
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Model("missing OSCNETV15 magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Model(format!(
            "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
        )));
    }
    let mut r = Reader {
        bytes: body,
        pos: MAGIC.len(),
    };
    let version = r.u8()?;
    if version != FORMAT_VERSION {
        return Err(Error::Model(format!(
            "format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let n_classes = r.u32()? as usize;
    let pixels = r.u32()? as usize;
    let counts = (0..n_classes).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let norm_code = r.u8()?;
    let norm_mode =
        NormMode::from_code(norm_code).ok_or_else(|| Error::Model(format!("bad norm mode {norm_code}")))?;
    let n2 = r.u32()? as usize;
    let sparse_code = r.u8()?;
    let n = n_classes
        .checked_mul(pixels)
        .and_then(|x| x.checked_mul(pixels))
        .ok_or_else(|| Error::Model("dimensions overflow".into()))?;
    let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Model("dimensions overflow".into()))?)?;
    let weights: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let tensor = NormalizedTensor::new(n_classes, pixels, norm_mode, weights)?;
    let mask = match sparse_code {
        0 => None,
        code => {
            let mode = SparseMode::from_code(code)
                .ok_or_else(|| Error::Model(format!("bad sparse mode {code}")))?;
            let mut lists = Vec::with_capacity(n_classes * pixels);
            for _ in 0..n_classes * pixels {
                let len = r.u32()? as usize;
                let list = (0..len).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
                lists.push(list);
            }
            Some(SparseMask::from_lists(n_classes, pixels, mode, n2, lists)?)
        }
    };
    if r.pos != body.len() {
        return Err(Error::Model(format!(
            "{} trailing bytes before checksum",
            body.len() - r.pos
        )));
    }
    Ok(Model {
        tensor,
        mask,
        counts,
    })
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_file(path, &encode_model(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
