//! On-disk formats for quantizers and feature matrices.
//!
//! Quantizer file layout (all integers little-endian `u32`):
//!
//! ```text
//! "SEMTOKQ1" | dim | levels | size[0] .. size[L-1] | digest (32 bytes)
//! entries: f32 LE, level-major, then entry index, then coordinate
//! ```
//!
//! Feature matrices are headerless `f32` LE files with a TOML sidecar at
//! `<path>.meta` holding `dim`, `frames` and `frame_rate_hz`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Codebook, FeatureSeq, Quantizer, Result, RvqError};
use crate::digest::Digest;

pub const QUANTIZER_MAGIC: &[u8; 8] = b"SEMTOKQ1";

impl Quantizer {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(QUANTIZER_MAGIC)?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.levels() as u32).to_le_bytes())?;
        for cb in self.codebooks() {
            w.write_all(&(cb.size() as u32).to_le_bytes())?;
        }
        w.write_all(&self.config_digest().0)?;
        for cb in self.codebooks() {
            for v in cb.entries() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != QUANTIZER_MAGIC {
            return Err(RvqError::Format("bad magic, not a quantizer file".into()));
        }
        let dim = cur.u32()? as usize;
        let levels = cur.u32()? as usize;
        if dim == 0 || levels == 0 {
            return Err(RvqError::Format(format!("dim={dim} levels={levels}")));
        }
        let sizes = (0..levels)
            .map(|_| cur.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let digest = Digest(cur.take(32)?.try_into().unwrap());
        let mut codebooks = Vec::with_capacity(levels);
        for (level, &size) in sizes.iter().enumerate() {
            let raw = cur.take(size.checked_mul(dim).and_then(|n| n.checked_mul(4)).ok_or_else(
                || RvqError::Format("codebook size overflows".into()),
            )?)?;
            let entries = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            codebooks.push(
                Codebook::new(level, dim, entries)
                    .map_err(|e| RvqError::Format(e.to_string()))?,
            );
        }
        if cur.pos != bytes.len() {
            return Err(RvqError::Format(format!(
                "{} trailing bytes",
                bytes.len() - cur.pos
            )));
        }
        Quantizer::new(codebooks, digest)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| RvqError::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureMeta {
    dim: usize,
    frames: usize,
    #[serde(default = "default_rate")]
    frame_rate_hz: f32,
}

fn default_rate() -> f32 {
    FeatureSeq::DEFAULT_FRAME_RATE_HZ
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn write_features(path: impl AsRef<Path>, data: &FeatureSeq) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(data.as_slice().len() * 4);
    for v in data.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    let meta = FeatureMeta {
        dim: data.dim(),
        frames: data.len(),
        frame_rate_hz: data.frame_rate_hz(),
    };
    let text = toml::to_string(&meta).map_err(|e| RvqError::Format(e.to_string()))?;
    fs::write(meta_path(path), text)?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSeq> {
    let path = path.as_ref();
    let mp = meta_path(path);
    let meta: FeatureMeta = toml::from_str(&fs::read_to_string(&mp)?)
        .map_err(|e| RvqError::Format(format!("{}: {e}", mp.display())))?;
    let bytes = fs::read(path)?;
    let expected = meta.dim * meta.frames * 4;
    if bytes.len() != expected {
        return Err(RvqError::Format(format!(
            "{}: {} bytes, metadata implies {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(FeatureSeq::new(meta.dim, data)?.with_frame_rate(meta.frame_rate_hz))
}
