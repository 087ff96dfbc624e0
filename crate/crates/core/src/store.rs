//! Precomputed per-modality token embeddings and the MMEB interchange format.
//!
//! MMEB layout (little-endian throughout):
//!
//! | offset | size       | field                                   |
//! |--------|------------|-----------------------------------------|
//! | 0      | 4          | magic `"MMEB"`                          |
//! | 4      | 4          | version `u32` = 1                       |
//! | 8      | 4          | dtype `u32` (1 = f32, 2 = f64)          |
//! | 12     | 8          | `n` `u64` (samples)                     |
//! | 20     | 8          | `t` `u64` (tokens per sample)           |
//! | 28     | 8          | `d` `u64` (embedding width)             |
//! | 36     | 4          | `name_len` `u32`                        |
//! | 40     | `name_len` | UTF-8 modality name                     |
//! | ...    | rest       | `n*t*d` IEEE-754 values, sample-major   |

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"MMEB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 40;

/// Storage precision of an MMEB payload. In memory values are always `f64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u32 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// One modality's token embeddings: `n` samples of `t` tokens of width `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTensor {
    name: String,
    n: usize,
    t: usize,
    d: usize,
    values: Vec<f64>,
}

impl EmbeddingTensor {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        t: usize,
        d: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let name = name.into();
        if n == 0 || t == 0 || d == 0 {
            return Err(Error::Format(format!(
                "tensor '{name}' has an empty dimension (n={n}, t={t}, d={d})"
            )));
        }
        let expected = element_count(n, t, d).ok_or_else(|| {
            Error::Format(format!("tensor '{name}' dimensions overflow: {n}x{t}x{d}"))
        })?;
        if values.len() != expected {
            return Err(Error::Format(format!(
                "tensor '{name}' holds {} values, expected {n}x{t}x{d} = {expected}",
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data {
                context: format!("tensor '{name}'"),
                index,
            });
        }
        Ok(Self {
            name,
            n,
            t,
            d,
            values,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// All `t*d` values of sample `i`, token-major.
    pub fn sample(&self, i: usize) -> &[f64] {
        let width = self.t * self.d;
        &self.values[i * width..(i + 1) * width]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn rename(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

fn element_count(n: usize, t: usize, d: usize) -> Option<usize> {
    n.checked_mul(t)?.checked_mul(d)
}

/// Serializes `tensor` to MMEB bytes. f32 storage rounds to nearest-even.
pub fn encode_embedding_tensor(tensor: &EmbeddingTensor, dtype: Dtype) -> Vec<u8> {
    let name = tensor.name.as_bytes();
    let mut out =
        Vec::with_capacity(HEADER_LEN + name.len() + tensor.values.len() * dtype.size());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dtype.code().to_le_bytes());
    out.extend_from_slice(&(tensor.n as u64).to_le_bytes());
    out.extend_from_slice(&(tensor.t as u64).to_le_bytes());
    out.extend_from_slice(&(tensor.d as u64).to_le_bytes());
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name);
    match dtype {
        Dtype::F32 => {
            for &v in &tensor.values {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in &tensor.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn write_embedding_tensor(
    tensor: &EmbeddingTensor,
    path: impl AsRef<Path>,
    dtype: Dtype,
) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    writer
        .write_all(&encode_embedding_tensor(tensor, dtype))
        .and_then(|_| writer.flush())
        .map_err(|e| Error::io(path, e))
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn le_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

/// Parses MMEB bytes. `origin` only labels error messages.
pub fn decode_embedding_tensor(bytes: &[u8], origin: &str) -> Result<EmbeddingTensor> {
    if bytes.len() >= 4 && bytes[..4] != MAGIC {
        return Err(Error::Format(format!("{origin}: bad magic {:?}", &bytes[..4])));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncation(format!(
            "{origin}: {} bytes is shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    let version = le_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::Format(format!("{origin}: unsupported version {version}")));
    }
    let dtype = Dtype::from_code(le_u32(bytes, 8))
        .ok_or_else(|| Error::Format(format!("{origin}: unknown dtype {}", le_u32(bytes, 8))))?;
    let dims = [le_u64(bytes, 12), le_u64(bytes, 20), le_u64(bytes, 28)];
    if dims.contains(&0) {
        return Err(Error::Format(format!(
            "{origin}: zero dimension in header {dims:?}"
        )));
    }
    let name_len = le_u32(bytes, 36) as usize;
    let payload_start = HEADER_LEN + name_len;
    if bytes.len() < payload_start {
        return Err(Error::Truncation(format!(
            "{origin}: name block of {name_len} bytes runs past end of file"
        )));
    }
    let name = std::str::from_utf8(&bytes[HEADER_LEN..payload_start])
        .map_err(|_| Error::Format(format!("{origin}: modality name is not UTF-8")))?;

    let [n, t, d] = dims.map(|v| usize::try_from(v).unwrap_or(usize::MAX));
    let count = element_count(n, t, d)
        .and_then(|c| c.checked_mul(dtype.size()).map(|bytes| (c, bytes)));
    let payload = &bytes[payload_start..];
    let count = match count {
        Some((count, len)) if len == payload.len() => count,
        _ => {
            return Err(Error::Truncation(format!(
                "{origin}: header declares {n}x{t}x{d} {dtype:?} values but payload has {} bytes",
                payload.len()
            )))
        }
    };

    let mut values = Vec::with_capacity(count);
    match dtype {
        Dtype::F32 => values.extend(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64),
        ),
        Dtype::F64 => values.extend(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap())),
        ),
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data {
            context: origin.to_string(),
            index,
        });
    }
    Ok(EmbeddingTensor {
        name: name.to_string(),
        n,
        t,
        d,
        values,
    })
}

pub fn read_embedding_tensor(path: impl AsRef<Path>) -> Result<EmbeddingTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embedding_tensor(&bytes, &path.display().to_string())
}

/// Aligned modalities sharing one sample count.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalDataset {
    modalities: Vec<EmbeddingTensor>,
    n: usize,
}

impl MultimodalDataset {
    pub fn new(modalities: Vec<EmbeddingTensor>) -> Result<Self> {
        let first = modalities
            .first()
            .ok_or_else(|| Error::Manifest("dataset has no modalities".into()))?;
        let n = first.n();
        let mut seen = HashSet::new();
        for m in &modalities {
            if !seen.insert(m.name()) {
                return Err(Error::Manifest(format!(
                    "duplicate modality name '{}'",
                    m.name()
                )));
            }
        }
        if let Some(bad) = modalities.iter().find(|m| m.n() != n) {
            return Err(Error::Alignment(format!(
                "modality '{}' has n={} but '{}' has n={n}",
                bad.name(),
                bad.n(),
                first.name()
            )));
        }
        Ok(Self { modalities, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn modality_count(&self) -> usize {
        self.modalities.len()
    }

    pub fn modalities(&self) -> &[EmbeddingTensor] {
        &self.modalities
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub path: PathBuf,
}

/// `{"modalities": [{"name": ..., "path": ...}, ...]}`. Relative paths are
/// resolved against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub modalities: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        if manifest.modalities.is_empty() {
            return Err(Error::Manifest(format!(
                "{}: manifest lists no modalities",
                path.display()
            )));
        }
        let mut seen = HashSet::new();
        for entry in &manifest.modalities {
            if !seen.insert(entry.name.as_str()) {
                return Err(Error::Manifest(format!(
                    "{}: duplicate modality name '{}'",
                    path.display(),
                    entry.name
                )));
            }
        }
        Ok(manifest)
    }

    /// Entry paths resolved against `base` (normally the manifest's directory).
    pub fn resolved_paths(&self, base: &Path) -> Vec<PathBuf> {
        self.modalities
            .iter()
            .map(|e| {
                if e.path.is_absolute() {
                    e.path.clone()
                } else {
                    base.join(&e.path)
                }
            })
            .collect()
    }
}

pub(crate) fn manifest_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

/// Loads every modality listed in the manifest, in manifest order.
///
/// The tensor takes the manifest's name for its modality. Files are read
/// concurrently; the first failure in manifest order is reported.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<MultimodalDataset> {
    let manifest_path = manifest_path.as_ref();
    let manifest = Manifest::read(manifest_path)?;
    let paths = manifest.resolved_paths(&manifest_dir(manifest_path));
    let loaded: Vec<Result<EmbeddingTensor>> =
        paths.par_iter().map(read_embedding_tensor).collect();
    let tensors = loaded
        .into_iter()
        .zip(&manifest.modalities)
        .map(|(t, entry)| t.map(|t| t.rename(entry.name.clone())))
        .collect::<Result<Vec<_>>>()?;
    MultimodalDataset::new(tensors)
}
