//! Level-by-level Lloyd's k-means training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{nearest, Codebook, FeatureSeq, Quantizer, Result, RvqError};
use crate::digest::Digest;

/// Training configuration for [`train_quantizer`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub levels: usize,
    /// Entries per codebook, including the reserved zero entry.
    pub codebook_size: usize,
    pub max_iters: usize,
    /// Stop a level once the relative MSE improvement drops below this.
    pub convergence_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            levels: 2,
            codebook_size: 512,
            max_iters: 25,
            convergence_tol: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(RvqError::InvalidConfig("levels must be at least 1".into()));
        }
        if self.codebook_size < 2 {
            return Err(RvqError::InvalidConfig("codebook_size must be at least 2".into()));
        }
        if self.codebook_size > super::MAX_CODEBOOK_SIZE {
            return Err(RvqError::InvalidConfig(format!(
                "codebook_size {} exceeds {}",
                self.codebook_size,
                super::MAX_CODEBOOK_SIZE
            )));
        }
        if self.max_iters < 1 {
            return Err(RvqError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(RvqError::InvalidConfig("convergence_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn digest(&self) -> Digest {
        Digest::of(
            format!(
                "rvq-train;levels={};codebook_size={};max_iters={};convergence_tol={:016x};seed={}",
                self.levels,
                self.codebook_size,
                self.max_iters,
                self.convergence_tol.to_bits(),
                self.seed
            )
            .as_bytes(),
        )
    }
}

/// Diagnostics for one level's Lloyd iterations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelReport {
    /// Training-set MSE measured after every assignment step.
    pub mse_history: Vec<f64>,
    pub reseeded: usize,
    pub converged: bool,
    /// Mean squared residual norm after this level has been applied.
    pub residual_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub levels: Vec<LevelReport>,
}

pub fn train_quantizer(data: &FeatureSeq, config: &TrainConfig) -> Result<Quantizer> {
    train_quantizer_with_report(data, config).map(|(q, _)| q)
}

/// Train an `L`-level quantizer. Level `l` is fitted to the residuals left by
/// levels `0..l`. The result is a pure function of `(data, config)`.
pub fn train_quantizer_with_report(
    data: &FeatureSeq,
    config: &TrainConfig,
) -> Result<(Quantizer, TrainReport)> {
    config.validate()?;
    let k = config.codebook_size;
    if data.len() < k {
        return Err(RvqError::InsufficientData {
            frames: data.len(),
            required: k,
        });
    }
    let dim = data.dim();
    let mut residuals: Vec<f64> = data.as_slice().iter().map(|&v| v as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut codebooks = Vec::with_capacity(config.levels);
    let mut report = TrainReport::default();

    for level in 0..config.levels {
        let mut entries = vec![0f32; k * dim];
        let picks = seed_frames(&residuals, dim, k - 1, &mut rng);
        for (slot, frame) in picks.into_iter().enumerate() {
            let src = &residuals[frame * dim..(frame + 1) * dim];
            let dst = &mut entries[(slot + 1) * dim..(slot + 2) * dim];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s as f32;
            }
        }
        let mut lr = lloyd(&residuals, dim, &mut entries, config.max_iters, config.convergence_tol, true);
        let cb = Codebook::new(level, dim, entries)?;
        lr.residual_mse = apply_level(&mut residuals, &cb);
        log::debug!(
            "level {level}: {} iterations, residual mse {:.6}",
            lr.mse_history.len(),
            lr.residual_mse
        );
        codebooks.push(cb);
        report.levels.push(lr);
    }
    Ok((Quantizer::new(codebooks, config.digest())?, report))
}

/// Run `iters` further Lloyd passes on every level of an existing quantizer,
/// starting from its current entries. Dead entries are left where they are
/// unless `reseed_dead` is set.
pub fn retrain(
    q: &Quantizer,
    data: &FeatureSeq,
    iters: usize,
    reseed_dead: bool,
) -> Result<(Quantizer, TrainReport)> {
    if iters < 1 {
        return Err(RvqError::InvalidConfig("iters must be at least 1".into()));
    }
    if data.dim() != q.dim() {
        return Err(RvqError::DimensionMismatch {
            expected: q.dim(),
            found: data.dim(),
        });
    }
    if data.is_empty() {
        return Err(RvqError::InsufficientData {
            frames: 0,
            required: 1,
        });
    }
    let dim = q.dim();
    let mut residuals: Vec<f64> = data.as_slice().iter().map(|&v| v as f64).collect();
    let mut codebooks = Vec::with_capacity(q.levels());
    let mut report = TrainReport::default();
    for cb in q.codebooks() {
        let mut entries = cb.entries().to_vec();
        // tol = 0 never triggers early stopping on a positive improvement
        let mut lr = lloyd(&residuals, dim, &mut entries, iters, 0.0, reseed_dead);
        let cb = Codebook::new(cb.level(), dim, entries)?;
        lr.residual_mse = apply_level(&mut residuals, &cb);
        codebooks.push(cb);
        report.levels.push(lr);
    }
    let digest = q
        .config_digest()
        .chain(format!("retrain;iters={iters};reseed={reseed_dead}").as_bytes());
    Ok((Quantizer::new(codebooks, digest)?, report))
}

/// Pick `count` distinct frames as initial centroids, each drawn with
/// probability proportional to its squared distance from the nearest entry
/// chosen so far (the reserved zero entry counts as already chosen). Once
/// every remaining frame coincides with a chosen one, picks fall back to
/// uniform sampling among the unpicked frames.
fn seed_frames(residuals: &[f64], dim: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = residuals.len() / dim;
    let mut min_d2: Vec<f64> = residuals.par_chunks_exact(dim).map(super::squared_norm).collect();
    let mut picked = vec![false; n];
    let mut picks = Vec::with_capacity(count);
    for _ in 0..count {
        let total: f64 = min_d2.iter().sum();
        let mut choice = None;
        if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (i, &w) in min_d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    choice = Some(i);
                    break;
                }
            }
            // rounding can leave the target just past the last positive weight
            if choice.is_none() {
                choice = min_d2.iter().rposition(|&w| w > 0.0);
            }
        }
        let frame = match choice {
            Some(i) => i,
            None => {
                let free = n - picks.len();
                let nth = rng.random_range(0..free);
                (0..n).filter(|&i| !picked[i]).nth(nth).unwrap()
            }
        };
        picked[frame] = true;
        picks.push(frame);
        let c = &residuals[frame * dim..(frame + 1) * dim];
        min_d2
            .par_iter_mut()
            .zip(residuals.par_chunks_exact(dim))
            .enumerate()
            .for_each(|(i, (d, r))| {
                if picked[i] {
                    *d = 0.0;
                    return;
                }
                let mut dist = 0.0;
                for (a, b) in r.iter().zip(c) {
                    let diff = a - b;
                    dist += diff * diff;
                }
                if dist < *d {
                    *d = dist;
                }
            });
    }
    picks
}

/// Subtract each frame's nearest entry from its residual; returns the mean
/// squared norm of the updated residuals.
fn apply_level(residuals: &mut [f64], cb: &Codebook) -> f64 {
    let dim = cb.dim();
    let n = residuals.len() / dim;
    let errs: Vec<f64> = residuals
        .par_chunks_exact_mut(dim)
        .map(|r| {
            let (idx, d) = cb.nearest(r);
            for (x, &c) in r.iter_mut().zip(cb.entry(idx as usize)) {
                *x -= c as f64;
            }
            d
        })
        .collect();
    errs.iter().sum::<f64>() / n as f64
}

/// Lloyd's iterations over `entries` (entry 0 pinned at zero).
///
/// Assignment runs in parallel; all reductions are sequential in frame order,
/// so the outcome does not depend on the thread count.
fn lloyd(
    residuals: &[f64],
    dim: usize,
    entries: &mut [f32],
    max_iters: usize,
    tol: f64,
    reseed_dead: bool,
) -> LevelReport {
    let n = residuals.len() / dim;
    let k = entries.len() / dim;
    let mut report = LevelReport::default();
    let mut sums = vec![0f64; k * dim];
    let mut counts = vec![0usize; k];

    for _ in 0..max_iters {
        let assign: Vec<(u32, f64)> = residuals
            .par_chunks_exact(dim)
            .map(|r| nearest(entries, dim, r))
            .collect();
        let mse = assign.iter().map(|a| a.1).sum::<f64>() / n as f64;
        let prev = report.mse_history.last().copied();
        report.mse_history.push(mse);
        if mse == 0.0 {
            report.converged = true;
            break;
        }
        if let Some(prev) = prev {
            if (prev - mse) / prev < tol {
                report.converged = true;
                break;
            }
        }

        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for (frame, &(idx, _)) in assign.iter().enumerate() {
            let idx = idx as usize;
            counts[idx] += 1;
            let src = &residuals[frame * dim..(frame + 1) * dim];
            for (s, &v) in sums[idx * dim..(idx + 1) * dim].iter_mut().zip(src) {
                *s += v;
            }
        }
        let mut dead = Vec::new();
        for c in 1..k {
            if counts[c] == 0 {
                dead.push(c);
                continue;
            }
            let inv = counts[c] as f64;
            for (e, &s) in entries[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(&sums[c * dim..(c + 1) * dim])
            {
                *e = (s / inv) as f32;
            }
        }
        if reseed_dead && !dead.is_empty() {
            // worst-quantized frames first; ties to the lower frame index
            let mut order: Vec<usize> = (0..n).filter(|&i| assign[i].1 > 0.0).collect();
            order.sort_by(|&a, &b| assign[b].1.total_cmp(&assign[a].1).then(a.cmp(&b)));
            for (&c, &frame) in dead.iter().zip(&order) {
                let src = &residuals[frame * dim..(frame + 1) * dim];
                for (e, &s) in entries[c * dim..(c + 1) * dim].iter_mut().zip(src) {
                    *e = s as f32;
                }
                report.reseeded += 1;
            }
        }
    }
    report
}
