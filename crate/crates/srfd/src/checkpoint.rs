//! Binary persistence of weights (`SGPT`) and adapters (`SGPA`).
//!
//! Layout of both files: 4-byte magic, `u32` format version, `u64` metadata
//! length, TOML metadata, `u32` array count, an index of
//! `(u16 name length, name, u32 rows, u32 cols)` entries, then every array's
//! values as little-endian `f32` in index order. All integers little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{ParamKind, SrfdConfig, SrfdWeights};
use crate::{Error, Matrix, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SGPT";
pub const ADAPTER_MAGIC: [u8; 4] = *b"SGPA";
pub const FORMAT_VERSION: u32 = 1;

fn encode(magic: [u8; 4], meta: &str, arrays: &[(&str, &Matrix<f32>)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, m) in arrays {
        let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("array name `{name}` too long")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    }
    for (_, m) in arrays {
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

type Tensors = Vec<(String, Matrix<f32>)>;

fn decode(magic: [u8; 4], bytes: &[u8]) -> Result<(String, Tensors)> {
    let mut r = Reader { bytes, pos: 0 };
    let got = r.take(4, "magic")?;
    if got != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(got)
        )));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Compatibility(format!(
            "format version {version}, this build reads version {FORMAT_VERSION}"
        )));
    }
    let meta_len =
        usize::try_from(r.u64("metadata length")?).map_err(|_| Error::Format("metadata length overflows".into()))?;
    let meta = std::str::from_utf8(r.take(meta_len, "metadata")?)
        .map_err(|e| Error::Format(format!("metadata is not UTF-8: {e}")))?
        .to_owned();
    let n = r.u32("array count")? as usize;
    let mut index = Vec::with_capacity(n.min(1 << 16));
    let mut total = 0usize;
    for _ in 0..n {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "array name")?)
            .map_err(|e| Error::Format(format!("array name is not UTF-8: {e}")))?
            .to_owned();
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format(format!("array `{name}` size overflows")))?;
        total = total
            .checked_add(count)
            .ok_or_else(|| Error::Format("array sizes overflow".into()))?;
        index.push((name, rows, cols));
    }
    let remaining = bytes.len() - r.pos;
    if total.checked_mul(4) != Some(remaining) {
        return Err(Error::Format(format!(
            "index declares {total} values but {remaining} data bytes follow"
        )));
    }
    let mut arrays = Vec::with_capacity(index.len());
    for (name, rows, cols) in index {
        let raw = r.take(rows * cols * 4, "array data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        arrays.push((name, Matrix::from_vec(rows, cols, data)));
    }
    Ok((meta, arrays))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Lower-case hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    config: SrfdConfig,
    #[serde(default)]
    extra: toml::Table,
}

/// Base weights plus free-form metadata (normalization statistics,
/// training provenance).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: SrfdConfig,
    pub extra: toml::Table,
    pub weights: SrfdWeights<f32>,
}

impl Checkpoint {
    /// Adapters on `weights`, if any, are not part of a base checkpoint.
    pub fn new(config: SrfdConfig, mut weights: SrfdWeights<f32>, extra: toml::Table) -> Result<Self> {
        weights.check_shapes(&config)?;
        weights.detach_lora();
        Ok(Self { config, extra, weights })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = toml::to_string(&CheckpointMeta {
            config: self.config.clone(),
            extra: self.extra.clone(),
        })
        .map_err(|e| Error::Format(format!("cannot encode metadata: {e}")))?;
        let params = self.weights.params();
        let arrays: Vec<_> = params
            .iter()
            .filter(|p| p.kind == ParamKind::Base)
            .map(|p| (p.name.as_str(), p.value))
            .collect();
        encode(CHECKPOINT_MAGIC, &meta, &arrays)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (meta, arrays) = decode(CHECKPOINT_MAGIC, bytes)?;
        let meta: CheckpointMeta =
            toml::from_str(&meta).map_err(|e| Error::Format(format!("checkpoint metadata: {e}")))?;
        meta.config.validate()?;
        let mut weights = SrfdWeights::<f32>::init(&meta.config, 0)?;
        {
            let slots = weights.params_mut();
            if slots.len() != arrays.len() {
                return Err(Error::Format(format!(
                    "checkpoint holds {} arrays, config needs {}",
                    arrays.len(),
                    slots.len()
                )));
            }
            for (slot, (name, m)) in slots.into_iter().zip(arrays) {
                if slot.name != name || slot.value.shape() != m.shape() {
                    return Err(Error::Format(format!(
                        "array `{name}` {:?} where `{}` {:?} was expected",
                        m.shape(),
                        slot.name,
                        slot.value.shape()
                    )));
                }
                *slot.value = m;
            }
        }
        Ok(Self {
            config: meta.config,
            extra: meta.extra,
            weights,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }

    /// Content hash of the serialized checkpoint.
    pub fn sha256(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdapterMeta {
    base_sha256: String,
    rank: usize,
    alpha: f64,
    #[serde(default)]
    extra: toml::Table,
}

/// Low-rank adapters tied to one base checkpoint by its content hash.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterCheckpoint {
    pub base_sha256: String,
    pub rank: usize,
    pub alpha: f64,
    pub extra: toml::Table,
    pub arrays: Vec<(String, Matrix<f32>)>,
}

impl AdapterCheckpoint {
    /// Collects the adapter arrays of `weights`.
    pub fn from_weights(
        base: &Checkpoint,
        weights: &SrfdWeights<f32>,
        rank: usize,
        alpha: f64,
        extra: toml::Table,
    ) -> Result<Self> {
        let arrays: Vec<_> = weights
            .params()
            .into_iter()
            .filter(|p| p.kind == ParamKind::Adapter)
            .map(|p| (p.name, p.value.clone()))
            .collect();
        if arrays.is_empty() {
            return Err(Error::Usage("weights carry no adapters".into()));
        }
        Ok(Self {
            base_sha256: base.sha256()?,
            rank,
            alpha,
            extra,
            arrays,
        })
    }

    /// Base weights with these adapters attached. Fails with a
    /// compatibility error when `base` is not the checkpoint they were
    /// trained against.
    pub fn apply(&self, base: &Checkpoint) -> Result<SrfdWeights<f32>> {
        let hash = base.sha256()?;
        if hash != self.base_sha256 {
            return Err(Error::Compatibility(format!(
                "adapter expects base {}, got {hash}",
                self.base_sha256
            )));
        }
        let mut weights = base.weights.clone();
        weights.attach_lora(self.rank, self.alpha, 0)?;
        let slots: Vec<_> = weights
            .params_mut()
            .into_iter()
            .filter(|p| p.kind == ParamKind::Adapter)
            .collect();
        if slots.len() != self.arrays.len() {
            return Err(Error::Format(format!(
                "adapter file holds {} arrays, model needs {}",
                self.arrays.len(),
                slots.len()
            )));
        }
        for (slot, (name, m)) in slots.into_iter().zip(&self.arrays) {
            if &slot.name != name || slot.value.shape() != m.shape() {
                return Err(Error::Format(format!(
                    "adapter array `{name}` {:?} where `{}` {:?} was expected",
                    m.shape(),
                    slot.name,
                    slot.value.shape()
                )));
            }
            *slot.value = m.clone();
        }
        Ok(weights)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = toml::to_string(&AdapterMeta {
            base_sha256: self.base_sha256.clone(),
            rank: self.rank,
            alpha: self.alpha,
            extra: self.extra.clone(),
        })
        .map_err(|e| Error::Format(format!("cannot encode adapter metadata: {e}")))?;
        let arrays: Vec<_> = self.arrays.iter().map(|(n, m)| (n.as_str(), m)).collect();
        encode(ADAPTER_MAGIC, &meta, &arrays)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (meta, arrays) = decode(ADAPTER_MAGIC, bytes)?;
        let meta: AdapterMeta = toml::from_str(&meta).map_err(|e| Error::Format(format!("adapter metadata: {e}")))?;
        Ok(Self {
            base_sha256: meta.base_sha256,
            rank: meta.rank,
            alpha: meta.alpha,
            extra: meta.extra,
            arrays,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}
