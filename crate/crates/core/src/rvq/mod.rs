//! Residual vector quantization.
//!
//! A [`Quantizer`] is an ordered list of codebooks. Encoding picks, per frame
//! and per level, the entry nearest (L2) to the running residual and subtracts
//! it before moving on to the next level. Entry 0 of every codebook is the
//! zero vector and never moves during training, so the residual norm of a
//! frame can only shrink from one level to the next.
//!
//! Distances and residuals are computed in `f64`; codebook entries are stored
//! as `f32` (the on-disk precision).

mod expand;
mod io;
mod train;

use rayon::prelude::*;
use thiserror::Error;

use crate::digest::Digest;

pub use expand::{expand_codebook, naive_expand, kaiming_std, MAX_CODEBOOK_SIZE};
pub use io::{read_features, write_features, QUANTIZER_MAGIC};
pub use train::{retrain, train_quantizer, train_quantizer_with_report, LevelReport, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum RvqError {
    #[error("insufficient data: {frames} frames, need at least {required}")]
    InsufficientData { frames: usize, required: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("token index {index} out of range at level {level}, position {position} (codebook size {size})")]
    IndexOutOfRange {
        level: usize,
        position: usize,
        index: u32,
        size: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RvqError> = std::result::Result<T, E>;

/// A sequence of equally sized real feature frames, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeq {
    dim: usize,
    data: Vec<f32>,
    frame_rate_hz: f32,
}

impl FeatureSeq {
    pub const DEFAULT_FRAME_RATE_HZ: f32 = 50.0;

    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(RvqError::InvalidInput("frame dimension must be at least 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(RvqError::InvalidInput(format!(
                "{} values do not form whole frames of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(RvqError::InvalidInput(format!(
                "non-finite value in frame {}",
                pos / dim
            )));
        }
        Ok(FeatureSeq {
            dim,
            data,
            frame_rate_hz: Self::DEFAULT_FRAME_RATE_HZ,
        })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    pub fn from_frames<F: AsRef<[f32]>>(dim: usize, frames: &[F]) -> Result<Self> {
        let mut data = Vec::with_capacity(frames.len() * dim);
        for (i, f) in frames.iter().enumerate() {
            let f = f.as_ref();
            if f.len() != dim {
                return Err(RvqError::InvalidInput(format!(
                    "frame {i} has dimension {}, expected {dim}",
                    f.len()
                )));
            }
            data.extend_from_slice(f);
        }
        Self::new(dim, data)
    }

    pub fn with_frame_rate(mut self, hz: f32) -> Self {
        self.frame_rate_hz = hz;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame_rate_hz(&self) -> f32 {
        self.frame_rate_hz
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frames(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Append all frames of `other`, which must share the dimension.
    pub fn extend(&mut self, other: &FeatureSeq) -> Result<()> {
        if other.dim != self.dim {
            return Err(RvqError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }
}

/// One level's set of centroid vectors. Entry 0 is always the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    level: usize,
    dim: usize,
    entries: Vec<f32>,
}

impl Codebook {
    pub fn new(level: usize, dim: usize, entries: Vec<f32>) -> Result<Self> {
        if dim == 0 || !entries.len().is_multiple_of(dim) {
            return Err(RvqError::InvalidInput(format!(
                "codebook entries do not form whole vectors of dimension {dim}"
            )));
        }
        let size = entries.len() / dim;
        if size < 2 {
            return Err(RvqError::InvalidInput(format!(
                "codebook at level {level} has {size} entries, need at least 2"
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(RvqError::InvalidInput(format!(
                "codebook at level {level} contains non-finite values"
            )));
        }
        if entries[..dim].iter().any(|&v| v != 0.0) {
            return Err(RvqError::InvalidInput(format!(
                "entry 0 of codebook at level {level} is not the zero vector"
            )));
        }
        Ok(Codebook { level, dim, entries })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.entries.len() / self.dim
    }

    pub fn entry(&self, index: usize) -> &[f32] {
        &self.entries[index * self.dim..(index + 1) * self.dim]
    }

    pub fn entries(&self) -> &[f32] {
        &self.entries
    }

    /// Index and squared distance of the entry nearest to `residual`.
    pub fn nearest(&self, residual: &[f64]) -> (u32, f64) {
        nearest(&self.entries, self.dim, residual)
    }
}

/// Lowest-index argmin of squared L2 distance over `entries`.
///
/// The squared distance is accumulated with the same operations used to form
/// the next residual, so `‖r − e‖²` returned here equals the squared norm of
/// the residual that `encode` carries forward.
pub(crate) fn nearest(entries: &[f32], dim: usize, residual: &[f64]) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for (k, e) in entries.chunks_exact(dim).enumerate() {
        let mut d = 0.0f64;
        for (r, &c) in residual.iter().zip(e) {
            let diff = r - c as f64;
            d += diff * diff;
        }
        if d < best.1 {
            best = (k as u32, d);
        }
    }
    best
}

pub(crate) fn squared_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).fold(0.0, |acc, x| acc + x)
}

/// Per-level codebook indices for a frame sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticTokenSeq {
    dim: usize,
    sizes: Vec<usize>,
    indices: Vec<Vec<u32>>,
}

impl SemanticTokenSeq {
    /// Build a token sequence, checking shape and bounds against `sizes`.
    pub fn new(dim: usize, sizes: Vec<usize>, indices: Vec<Vec<u32>>) -> Result<Self> {
        if sizes.len() != indices.len() || sizes.is_empty() {
            return Err(RvqError::InvalidInput(format!(
                "{} index rows for {} levels",
                indices.len(),
                sizes.len()
            )));
        }
        let len = indices[0].len();
        for (level, row) in indices.iter().enumerate() {
            if row.len() != len {
                return Err(RvqError::InvalidInput(format!(
                    "level {level} has {} indices, level 0 has {len}",
                    row.len()
                )));
            }
            if let Some(position) = row.iter().position(|&i| i as usize >= sizes[level]) {
                return Err(RvqError::IndexOutOfRange {
                    level,
                    position,
                    index: row[position],
                    size: sizes[level],
                });
            }
        }
        Ok(SemanticTokenSeq { dim, sizes, indices })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn levels(&self) -> usize {
        self.indices.len()
    }

    pub fn len(&self) -> usize {
        self.indices[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn codebook_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn level(&self, level: usize) -> &[u32] {
        &self.indices[level]
    }

    pub fn into_levels(self) -> Vec<Vec<u32>> {
        self.indices
    }

    /// Plain-text rendering: a header line, then one line per frame with the
    /// per-level indices separated by spaces.
    pub fn to_text(&self) -> String {
        let sizes: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        let mut out = format!(
            "levels={} frames={} dim={} sizes={}\n",
            self.levels(),
            self.len(),
            self.dim,
            sizes.join(",")
        );
        for t in 0..self.len() {
            let row: Vec<String> = self.indices.iter().map(|lv| lv[t].to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| RvqError::Format("empty token file".into()))?;
        let mut levels = None;
        let mut frames = None;
        let mut dim = None;
        let mut sizes = None;
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| RvqError::Format(format!("bad header field {field:?}")))?;
            let bad = |_| RvqError::Format(format!("bad header value {field:?}"));
            match k {
                "levels" => levels = Some(v.parse::<usize>().map_err(bad)?),
                "frames" => frames = Some(v.parse::<usize>().map_err(bad)?),
                "dim" => dim = Some(v.parse::<usize>().map_err(bad)?),
                "sizes" => {
                    sizes = Some(
                        v.split(',')
                            .map(|s| s.parse::<usize>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(bad)?,
                    )
                }
                _ => return Err(RvqError::Format(format!("unknown header field {k:?}"))),
            }
        }
        let missing = |name: &str| RvqError::Format(format!("header lacks {name}"));
        let levels = levels.ok_or_else(|| missing("levels"))?;
        let frames = frames.ok_or_else(|| missing("frames"))?;
        let dim = dim.ok_or_else(|| missing("dim"))?;
        let sizes = sizes.ok_or_else(|| missing("sizes"))?;
        if sizes.len() != levels {
            return Err(RvqError::Format("sizes do not match level count".into()));
        }
        let mut indices = vec![Vec::with_capacity(frames); levels];
        for (t, line) in lines.enumerate() {
            let row: Vec<u32> = line
                .split_whitespace()
                .map(|s| s.parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| RvqError::Format(format!("line {}: {e}", t + 2)))?;
            if row.len() != levels {
                return Err(RvqError::Format(format!(
                    "line {}: {} indices for {levels} levels",
                    t + 2,
                    row.len()
                )));
            }
            for (lv, idx) in row.into_iter().enumerate() {
                indices[lv].push(idx);
            }
        }
        if indices[0].len() != frames {
            return Err(RvqError::Format(format!(
                "header announces {frames} frames, found {}",
                indices[0].len()
            )));
        }
        Self::new(dim, sizes, indices)
    }
}

/// Encoder output together with the residual-norm trace.
#[derive(Debug, Clone)]
pub struct EncodeReport {
    pub tokens: SemanticTokenSeq,
    levels: usize,
    /// `levels + 1` norms per frame: `‖x‖, ‖r₁‖, …, ‖r_L‖`.
    norms: Vec<f64>,
}

impl EncodeReport {
    /// Residual norms for frame `t`, starting with the input norm.
    pub fn frame_norms(&self, t: usize) -> &[f64] {
        let stride = self.levels + 1;
        &self.norms[t * stride..(t + 1) * stride]
    }

    pub fn final_residual_norm(&self, t: usize) -> f64 {
        self.frame_norms(t)[self.levels]
    }
}

/// Utilization statistics for one codebook level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelUtilization {
    pub histogram: Vec<u64>,
    /// Shannon entropy of the code distribution in nats.
    pub entropy: f64,
    /// Entropy divided by `ln K`, in `[0, 1]`.
    pub normalized_entropy: f64,
}

impl LevelUtilization {
    pub fn used_codes(&self) -> usize {
        self.histogram.iter().filter(|&&c| c > 0).count()
    }
}

/// A trained residual vector quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    dim: usize,
    codebooks: Vec<Codebook>,
    config_digest: Digest,
}

impl Quantizer {
    pub fn new(codebooks: Vec<Codebook>, config_digest: Digest) -> Result<Self> {
        let dim = codebooks
            .first()
            .ok_or_else(|| RvqError::InvalidInput("quantizer needs at least one level".into()))?
            .dim;
        for (i, cb) in codebooks.iter().enumerate() {
            if cb.level != i {
                return Err(RvqError::InvalidInput(format!(
                    "codebook {i} is tagged as level {}",
                    cb.level
                )));
            }
            if cb.dim != dim {
                return Err(RvqError::DimensionMismatch {
                    expected: dim,
                    found: cb.dim,
                });
            }
        }
        Ok(Quantizer {
            dim,
            codebooks,
            config_digest,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn levels(&self) -> usize {
        self.codebooks.len()
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }

    pub fn codebook(&self, level: usize) -> &Codebook {
        &self.codebooks[level]
    }

    pub fn codebook_sizes(&self) -> Vec<usize> {
        self.codebooks.iter().map(Codebook::size).collect()
    }

    pub fn config_digest(&self) -> Digest {
        self.config_digest
    }

    fn check_dim(&self, data: &FeatureSeq) -> Result<()> {
        if data.dim() != self.dim {
            return Err(RvqError::DimensionMismatch {
                expected: self.dim,
                found: data.dim(),
            });
        }
        Ok(())
    }

    /// Quantize one frame, writing the chosen index per level into `out` and
    /// the residual norms (input first) into `norms`.
    fn encode_frame(&self, frame: &[f32], out: &mut [u32], norms: &mut [f64]) {
        let mut residual: Vec<f64> = frame.iter().map(|&v| v as f64).collect();
        norms[0] = squared_norm(&residual).sqrt();
        for (level, cb) in self.codebooks.iter().enumerate() {
            let (idx, dist) = cb.nearest(&residual);
            for (r, &c) in residual.iter_mut().zip(cb.entry(idx as usize)) {
                *r -= c as f64;
            }
            out[level] = idx;
            norms[level + 1] = dist.sqrt();
        }
    }

    pub fn encode(&self, data: &FeatureSeq) -> Result<SemanticTokenSeq> {
        Ok(self.encode_with_report(data)?.tokens)
    }

    pub fn encode_with_report(&self, data: &FeatureSeq) -> Result<EncodeReport> {
        self.check_dim(data)?;
        let levels = self.levels();
        let per_frame: Vec<(Vec<u32>, Vec<f64>)> = data
            .as_slice()
            .par_chunks_exact(self.dim)
            .map(|frame| {
                let mut idx = vec![0u32; levels];
                let mut norms = vec![0f64; levels + 1];
                self.encode_frame(frame, &mut idx, &mut norms);
                (idx, norms)
            })
            .collect();
        let mut indices = vec![Vec::with_capacity(per_frame.len()); levels];
        let mut norms = Vec::with_capacity(per_frame.len() * (levels + 1));
        for (idx, n) in per_frame {
            for (lv, i) in idx.into_iter().enumerate() {
                indices[lv].push(i);
            }
            norms.extend(n);
        }
        Ok(EncodeReport {
            tokens: SemanticTokenSeq {
                dim: self.dim,
                sizes: self.codebook_sizes(),
                indices,
            },
            levels,
            norms,
        })
    }

    pub fn decode(&self, tokens: &SemanticTokenSeq) -> Result<FeatureSeq> {
        if tokens.levels() != self.levels() {
            return Err(RvqError::InvalidInput(format!(
                "token sequence has {} levels, quantizer has {}",
                tokens.levels(),
                self.levels()
            )));
        }
        for (level, cb) in self.codebooks.iter().enumerate() {
            let row = tokens.level(level);
            if let Some(position) = row.iter().position(|&i| i as usize >= cb.size()) {
                return Err(RvqError::IndexOutOfRange {
                    level,
                    position,
                    index: row[position],
                    size: cb.size(),
                });
            }
        }
        let mut data = Vec::with_capacity(tokens.len() * self.dim);
        let mut acc = vec![0f64; self.dim];
        for t in 0..tokens.len() {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (level, cb) in self.codebooks.iter().enumerate() {
                let e = cb.entry(tokens.level(level)[t] as usize);
                for (a, &c) in acc.iter_mut().zip(e) {
                    *a += c as f64;
                }
            }
            data.extend(acc.iter().map(|&a| a as f32));
        }
        FeatureSeq::new(self.dim, data)
    }

    /// Code histograms and normalized entropy per level over `data`.
    pub fn utilization(&self, data: &FeatureSeq) -> Result<Vec<LevelUtilization>> {
        if data.is_empty() {
            return Err(RvqError::InvalidInput("utilization of empty data".into()));
        }
        let tokens = self.encode(data)?;
        let total = tokens.len() as f64;
        Ok(self
            .codebooks
            .iter()
            .enumerate()
            .map(|(level, cb)| {
                let mut histogram = vec![0u64; cb.size()];
                for &i in tokens.level(level) {
                    histogram[i as usize] += 1;
                }
                let entropy = histogram
                    .iter()
                    .filter(|&&c| c > 0)
                    .map(|&c| {
                        let p = c as f64 / total;
                        -p * p.ln()
                    })
                    .sum::<f64>()
                    .max(0.0);
                LevelUtilization {
                    normalized_entropy: entropy / (cb.size() as f64).ln(),
                    histogram,
                    entropy,
                }
            })
            .collect())
    }
}
