//! `CBV1` embedding files.
//!
//! Layout, all little-endian: the magic bytes `CBV1`, a `u32` row count, a
//! `u32` dimension, then `count * dimension` IEEE-754 `f32` values in row
//! order. Row ids live in a text sidecar with one id per line.

use std::collections::HashMap;

use super::RetrievalError;

pub const MAGIC: &[u8; 4] = b"CBV1";
const HEADER_LEN: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct VectorSet {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    by_id: HashMap<String, usize>,
}

impl VectorSet {
    pub fn new(dim: usize, rows: Vec<(String, Vec<f32>)>) -> Result<Self, RetrievalError> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, row) in rows {
            if row.len() != dim {
                return Err(RetrievalError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            ids.push(id);
            data.extend(row);
        }
        VectorSet::from_parts(dim, ids, data)
    }

    fn from_parts(dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self, RetrievalError> {
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(RetrievalError::NonFinite {
                row: pos / dim.max(1),
            });
        }
        let mut by_id = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if by_id.insert(id.clone(), i).is_some() {
                return Err(RetrievalError::DuplicateId(id.clone()));
            }
        }
        Ok(VectorSet {
            dim,
            ids,
            data,
            by_id,
        })
    }

    /// Decodes a vector file and its id sidecar.
    pub fn read(bytes: &[u8], sidecar: &str) -> Result<Self, RetrievalError> {
        if bytes.len() < HEADER_LEN {
            return Err(RetrievalError::Format("file shorter than header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(RetrievalError::Format("bad magic bytes".into()));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = count
            .checked_mul(dim)
            .and_then(|v| v.checked_mul(4))
            .and_then(|v| v.checked_add(HEADER_LEN))
            .ok_or_else(|| RetrievalError::Format("size overflow".into()))?;
        if bytes.len() != expected {
            return Err(RetrievalError::Format(format!(
                "expected {expected} bytes for {count}x{dim}, found {}",
                bytes.len()
            )));
        }
        let data: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let ids: Vec<String> = sidecar
            .lines()
            .map(|l| l.trim_end_matches('\r').to_string())
            .collect();
        if ids.len() != count {
            return Err(RetrievalError::Format(format!(
                "sidecar lists {} ids for {count} rows",
                ids.len()
            )));
        }
        if let Some(empty) = ids.iter().position(String::is_empty) {
            return Err(RetrievalError::Format(format!("empty id on sidecar line {}", empty + 1)));
        }
        VectorSet::from_parts(dim, ids, data)
    }

    /// Encodes the binary file and the sidecar text.
    pub fn write(&self) -> (Vec<u8>, String) {
        let mut bytes = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for x in &self.data {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let mut sidecar = self.ids.join("\n");
        if !sidecar.is_empty() {
            sidecar.push('\n');
        }
        (bytes, sidecar)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.by_id.get(id).map(|&i| self.row(i))
    }
}

/// Cosine similarity, accumulated in `f64`.
pub fn cosine_score(a: &[f32], b: &[f32]) -> Result<f64, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroNorm);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}
