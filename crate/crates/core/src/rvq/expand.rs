//! Codebook expansion: duplicate-and-perturb, plus the fresh-random baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Codebook, Quantizer, Result, RvqError};

/// Largest codebook the four-digit sound markup can address.
pub const MAX_CODEBOOK_SIZE: usize = 10_000;

/// Fan-in scaled standard deviation `sqrt(2 / dim)`.
pub fn kaiming_std(dim: usize) -> f64 {
    (2.0 / dim as f64).sqrt()
}

fn check_args(q: &Quantizer, factor: usize, noise_std: f64) -> Result<()> {
    if factor < 2 {
        return Err(RvqError::InvalidConfig(format!(
            "expansion factor must be at least 2, got {factor}"
        )));
    }
    if !(noise_std > 0.0) || !noise_std.is_finite() {
        return Err(RvqError::InvalidConfig(format!(
            "noise_std must be positive, got {noise_std}"
        )));
    }
    for cb in q.codebooks() {
        if cb.size() * factor > MAX_CODEBOOK_SIZE {
            return Err(RvqError::InvalidConfig(format!(
                "level {} would grow to {} entries, limit is {MAX_CODEBOOK_SIZE}",
                cb.level(),
                cb.size() * factor
            )));
        }
    }
    Ok(())
}

/// Grow every codebook `factor`-fold: the original entries keep their indices
/// and are followed by `factor - 1` copies, each coordinate perturbed by
/// `N(0, noise_std²)`. Only global index 0 stays the reserved zero; perturbed
/// copies of it are ordinary entries.
pub fn expand_codebook(
    q: &Quantizer,
    factor: usize,
    noise_std: Option<f64>,
    seed: u64,
) -> Result<Quantizer> {
    let std = noise_std.unwrap_or_else(|| kaiming_std(q.dim()));
    check_args(q, factor, std)?;
    let normal = Normal::new(0.0, std).map_err(|e| RvqError::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codebooks = Vec::with_capacity(q.levels());
    for cb in q.codebooks() {
        let orig = cb.entries();
        let mut entries = Vec::with_capacity(orig.len() * factor);
        entries.extend_from_slice(orig);
        for _ in 1..factor {
            entries.extend(
                orig.iter()
                    .map(|&v| (v as f64 + normal.sample(&mut rng)) as f32),
            );
        }
        codebooks.push(Codebook::new(cb.level(), cb.dim(), entries)?);
    }
    let digest = q.config_digest().chain(
        format!("expand;factor={factor};std={:016x};seed={seed}", std.to_bits()).as_bytes(),
    );
    Quantizer::new(codebooks, digest)
}

/// Baseline expansion: the new entries are drawn fresh from `N(0, std²)`
/// with no relation to the trained ones.
pub fn naive_expand(
    q: &Quantizer,
    factor: usize,
    noise_std: Option<f64>,
    seed: u64,
) -> Result<Quantizer> {
    let std = noise_std.unwrap_or_else(|| kaiming_std(q.dim()));
    check_args(q, factor, std)?;
    let normal = Normal::new(0.0, std).map_err(|e| RvqError::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codebooks = Vec::with_capacity(q.levels());
    for cb in q.codebooks() {
        let orig = cb.entries();
        let mut entries = Vec::with_capacity(orig.len() * factor);
        entries.extend_from_slice(orig);
        entries.extend((0..orig.len() * (factor - 1)).map(|_| normal.sample(&mut rng) as f32));
        codebooks.push(Codebook::new(cb.level(), cb.dim(), entries)?);
    }
    let digest = q.config_digest().chain(
        format!("naive;factor={factor};std={:016x};seed={seed}", std.to_bits()).as_bytes(),
    );
    Quantizer::new(codebooks, digest)
}
