//! Text-to-semantic translation at character level.
//!
//! Two halves live here:
//!
//! * a synthetic acoustic oracle ([`speak`], [`speech_path`]) that turns text
//!   into feature frames and then, through a quantizer and the duration codec,
//!   into a token stream; every character owns a fixed unit vector and a fixed
//!   frame count derived from a seeded hash, plus optional Gaussian noise;
//! * a [`MapperModel`] that learns a per-character `(sound, duration)` table
//!   from `(text, stream)` pairs by alternating monotonic DP alignment with
//!   majority-vote re-estimation, and translates text without any features.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::digest::Digest;
use crate::durcodec::{CodecError, DurationCodec, Group, TokenStream};
use crate::rvq::{FeatureSeq, Quantizer, RvqError};

/// Alignment iterations before giving up on convergence.
pub const MAX_ALIGN_ITERS: usize = 20;

#[derive(Debug, Error)]
pub enum Text2SemError {
    #[error("character {ch:?} at char position {position} is outside the alphabet")]
    OutOfAlphabet { ch: char, position: usize },
    #[error("characters never observed in usable training pairs: {0:?}")]
    Unobserved(Vec<char>),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed mapper file: {0}")]
    Format(String),
    #[error(transparent)]
    Rvq(#[from] RvqError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Text2SemError> = std::result::Result<T, E>;

/// Lowercase Latin letters plus the space character.
pub fn default_alphabet() -> Vec<char> {
    let mut a: Vec<char> = ('a'..='z').collect();
    a.push(' ');
    a.sort_unstable();
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub dim: usize,
    pub min_duration: u32,
    pub max_duration: u32,
    /// Per-coordinate standard deviation of additive frame noise.
    pub noise_std: f64,
    pub seed: u64,
    /// Sorted, deduplicated.
    pub alphabet: Vec<char>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            dim: 64,
            min_duration: 2,
            max_duration: 6,
            noise_std: 0.0,
            seed: 0,
            alphabet: default_alphabet(),
        }
    }
}

impl OracleConfig {
    pub fn with_noise(&self, noise_std: f64) -> Self {
        OracleConfig {
            noise_std,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Text2SemError::InvalidConfig("dim must be at least 1".into()));
        }
        if self.min_duration < 1 || self.min_duration > self.max_duration {
            return Err(Text2SemError::InvalidConfig(format!(
                "duration range [{}, {}] is empty or starts below 1",
                self.min_duration, self.max_duration
            )));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Text2SemError::InvalidConfig("noise_std must be >= 0".into()));
        }
        if self.alphabet.is_empty() || self.alphabet.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Text2SemError::InvalidConfig(
                "alphabet must be non-empty, sorted and free of duplicates".into(),
            ));
        }
        Ok(())
    }

    fn check_text(&self, text: &str) -> Result<()> {
        check_alphabet(&self.alphabet, text)
    }

    /// The unit vector and frame count owned by `c`. Depends only on `c` and
    /// the master seed.
    pub fn char_profile(&self, c: char) -> (Vec<f32>, u32) {
        let mut key = self.seed.to_le_bytes().to_vec();
        key.extend_from_slice(&(c as u32).to_le_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(Digest::of(&key).to_u64());
        let raw: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let v = raw.iter().map(|v| (v / norm) as f32).collect();
        let dur = rng.random_range(self.min_duration..=self.max_duration);
        (v, dur)
    }
}

fn check_alphabet(alphabet: &[char], text: &str) -> Result<()> {
    for (position, ch) in text.chars().enumerate() {
        if alphabet.binary_search(&ch).is_err() {
            return Err(Text2SemError::OutOfAlphabet { ch, position });
        }
    }
    Ok(())
}

/// Synthesize feature frames for `text`.
///
/// Noise, when enabled, is drawn from a generator keyed by the master seed
/// and the text, so repeated calls are reproducible.
pub fn speak(text: &str, cfg: &OracleConfig) -> Result<FeatureSeq> {
    cfg.validate()?;
    cfg.check_text(text)?;
    let mut profiles: BTreeMap<char, (Vec<f32>, u32)> = BTreeMap::new();
    let mut data = Vec::new();
    for c in text.chars() {
        let (v, dur) = profiles.entry(c).or_insert_with(|| cfg.char_profile(c));
        for _ in 0..*dur {
            data.extend_from_slice(v);
        }
    }
    if cfg.noise_std > 0.0 {
        let mut key = b"noise".to_vec();
        key.extend_from_slice(&cfg.seed.to_le_bytes());
        key.extend_from_slice(text.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(Digest::of(&key).to_u64());
        let normal = Normal::new(0.0, cfg.noise_std).unwrap();
        for v in &mut data {
            *v = (*v as f64 + normal.sample(&mut rng)) as f32;
        }
    }
    Ok(FeatureSeq::new(cfg.dim, data)?)
}

/// Oracle speech → quantizer level 0 → duration codec.
pub fn speech_path(
    text: &str,
    cfg: &OracleConfig,
    q: &Quantizer,
    codec: &DurationCodec,
) -> Result<TokenStream> {
    let feats = speak(text, cfg)?;
    if feats.is_empty() {
        return Ok(TokenStream::default());
    }
    let tokens = q.encode(&feats)?;
    Ok(codec.compress(tokens.level(0))?)
}

/// Random lowercase sentences: 3 to 8 words of 2 to 8 letters each.
pub fn synthetic_sentences(count: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let words = rng.random_range(3..=8);
            let mut s = String::new();
            for w in 0..words {
                if w > 0 {
                    s.push(' ');
                }
                for _ in 0..rng.random_range(2..=8) {
                    s.push(rng.random_range(b'a'..=b'z') as char);
                }
            }
            s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MapperDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub skipped_pairs: usize,
    /// Total E-step alignment cost per iteration.
    pub cost_history: Vec<usize>,
}

/// Learned per-character emission table.
#[derive(Debug, Clone, PartialEq)]
pub struct MapperModel {
    table: BTreeMap<char, Group>,
    pub diagnostics: MapperDiagnostics,
}

/// Monotonic alignment of `groups` onto `chars`: every group goes to exactly
/// one character, every character receives at least one contiguous group.
/// Returns the character index per group and the total cost.
///
/// Requires `groups.len() >= chars.len() >= 1`. On equal cost the DP prefers
/// starting a new character over extending the current one.
pub fn align(groups: &[Group], chars: &[char], best: &BTreeMap<char, u32>) -> (Vec<usize>, usize) {
    let (n, m) = (groups.len(), chars.len());
    debug_assert!(n >= m && m >= 1);
    let cost = |g: &Group, c: char| usize::from(best.get(&c) != Some(&g.sound));
    const INF: usize = usize::MAX / 2;
    let w = m + 1;
    let mut dp = vec![INF; (n + 1) * w];
    // true when the cell was reached by starting a new character
    let mut from_new = vec![false; (n + 1) * w];
    dp[0] = 0;
    for i in 1..=n {
        for j in 1..=m.min(i) {
            let new = dp[(i - 1) * w + j - 1];
            let extend = dp[(i - 1) * w + j];
            let (prev, is_new) = if new <= extend { (new, true) } else { (extend, false) };
            if prev >= INF {
                continue;
            }
            dp[i * w + j] = prev + cost(&groups[i - 1], chars[j - 1]);
            from_new[i * w + j] = is_new;
        }
    }
    let total = dp[n * w + m];
    let mut assign = vec![0usize; n];
    let (mut i, mut j) = (n, m);
    while i > 0 {
        assign[i - 1] = j - 1;
        if from_new[i * w + j] {
            j -= 1;
        }
        i -= 1;
    }
    (assign, total)
}

impl MapperModel {
    /// Learn the emission table from paired text and token streams.
    ///
    /// Pairs with fewer groups than characters cannot be aligned and are
    /// skipped (counted in the diagnostics).
    pub fn train(pairs: &[(String, TokenStream)], alphabet: &[char]) -> Result<Self> {
        let mut alphabet = alphabet.to_vec();
        alphabet.sort_unstable();
        alphabet.dedup();
        let mut diagnostics = MapperDiagnostics::default();
        let mut usable: Vec<(Vec<char>, &TokenStream)> = Vec::new();
        for (text, stream) in pairs {
            check_alphabet(&alphabet, text)?;
            let chars: Vec<char> = text.chars().collect();
            if chars.is_empty() || stream.groups.len() < chars.len() {
                diagnostics.skipped_pairs += 1;
                continue;
            }
            usable.push((chars, stream));
        }
        if diagnostics.skipped_pairs > 0 {
            log::warn!(
                "skipped {} of {} training pairs with fewer groups than characters",
                diagnostics.skipped_pairs,
                pairs.len()
            );
        }
        let missing: Vec<char> = alphabet
            .iter()
            .copied()
            .filter(|c| !usable.iter().any(|(chars, _)| chars.contains(c)))
            .collect();
        if !missing.is_empty() {
            return Err(Text2SemError::Unobserved(missing));
        }

        let mut best: BTreeMap<char, u32> = BTreeMap::new();
        let mut durations: BTreeMap<char, u32> = BTreeMap::new();
        let mut previous: Option<Vec<Vec<usize>>> = None;
        for _ in 0..MAX_ALIGN_ITERS {
            let results: Vec<(Vec<usize>, usize)> = usable
                .par_iter()
                .map(|(chars, stream)| align(&stream.groups, chars, &best))
                .collect();
            diagnostics.iterations += 1;
            diagnostics
                .cost_history
                .push(results.iter().map(|r| r.1).sum());
            let alignments: Vec<Vec<usize>> = results.into_iter().map(|r| r.0).collect();
            if previous.as_ref() == Some(&alignments) {
                diagnostics.converged = true;
                break;
            }
            (best, durations) = re_estimate(&usable, &alignments);
            previous = Some(alignments);
        }
        let table = alphabet
            .iter()
            .map(|c| (*c, Group::new(best[c], durations[c])))
            .collect();
        Ok(MapperModel { table, diagnostics })
    }

    pub fn from_table(table: BTreeMap<char, Group>) -> Result<Self> {
        if table.is_empty() {
            return Err(Text2SemError::InvalidConfig("empty emission table".into()));
        }
        if let Some((c, g)) = table.iter().find(|(_, g)| g.run == 0) {
            return Err(Text2SemError::InvalidConfig(format!(
                "character {c:?} has zero duration (sound {})",
                g.sound
            )));
        }
        Ok(MapperModel {
            table,
            diagnostics: MapperDiagnostics::default(),
        })
    }

    pub fn alphabet(&self) -> Vec<char> {
        self.table.keys().copied().collect()
    }

    pub fn contains(&self, c: char) -> bool {
        self.table.contains_key(&c)
    }

    pub fn emission(&self, c: char) -> Option<Group> {
        self.table.get(&c).copied()
    }

    pub fn table(&self) -> &BTreeMap<char, Group> {
        &self.table
    }

    /// Emit each character's group and re-canonicalize (adjacent equal
    /// sounds merge, long runs split at the codec's maximum duration).
    pub fn translate(&self, text: &str, codec: &DurationCodec) -> Result<TokenStream> {
        let mut frames = Vec::new();
        for (position, ch) in text.chars().enumerate() {
            let g = self
                .table
                .get(&ch)
                .ok_or(Text2SemError::OutOfAlphabet { ch, position })?;
            frames.extend(std::iter::repeat_n(g.sound, g.run as usize));
        }
        Ok(codec.compress(&frames)?)
    }

    fn body(&self) -> String {
        let mut out = String::new();
        for (c, g) in &self.table {
            writeln!(out, "{:04x} {} {}", *c as u32, g.sound, g.run).unwrap();
        }
        out
    }

    pub fn digest(&self) -> Digest {
        Digest::of(self.body().as_bytes())
    }

    /// Sorted plain-text table preceded by a header line.
    pub fn to_text(&self) -> String {
        format!(
            "semtok-mapper alphabet_size={} digest={}\n{}",
            self.table.len(),
            self.digest(),
            self.body()
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Text2SemError::Format(format!("line {line}: {msg}"));
        let (header, body) = text.split_once('\n').ok_or_else(|| bad(1, "missing header"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("semtok-mapper") {
            return Err(bad(1, "not a mapper file"));
        }
        let mut size = None;
        let mut digest = None;
        for f in fields {
            match f.split_once('=') {
                Some(("alphabet_size", v)) => {
                    size = Some(v.parse::<usize>().map_err(|_| bad(1, "bad alphabet_size"))?)
                }
                Some(("digest", v)) => {
                    digest = Some(Digest::from_hex(v).ok_or_else(|| bad(1, "bad digest"))?)
                }
                _ => return Err(bad(1, &format!("unknown header field {f:?}"))),
            }
        }
        let size = size.ok_or_else(|| bad(1, "missing alphabet_size"))?;
        let digest = digest.ok_or_else(|| bad(1, "missing digest"))?;
        let mut table = BTreeMap::new();
        let mut last: Option<char> = None;
        for (i, line) in body.lines().enumerate() {
            let ln = i + 2;
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 3 {
                return Err(bad(ln, "expected `codepoint sound duration`"));
            }
            let c = u32::from_str_radix(parts[0], 16)
                .ok()
                .and_then(char::from_u32)
                .ok_or_else(|| bad(ln, "bad codepoint"))?;
            if last.is_some_and(|l| l >= c) {
                return Err(bad(ln, "entries not sorted by codepoint"));
            }
            last = Some(c);
            let sound = parts[1].parse().map_err(|_| bad(ln, "bad sound id"))?;
            let run: u32 = parts[2].parse().map_err(|_| bad(ln, "bad duration"))?;
            table.insert(c, Group::new(sound, run));
        }
        if table.len() != size {
            return Err(Text2SemError::Format(format!(
                "header announces {size} entries, found {}",
                table.len()
            )));
        }
        let model = Self::from_table(table)?;
        if model.digest() != digest {
            return Err(Text2SemError::Format("digest does not match table".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// M-step: majority sound (lowest id on ties) and lower-median run per char.
fn re_estimate(
    usable: &[(Vec<char>, &TokenStream)],
    alignments: &[Vec<usize>],
) -> (BTreeMap<char, u32>, BTreeMap<char, u32>) {
    let mut votes: BTreeMap<char, BTreeMap<u32, usize>> = BTreeMap::new();
    let mut runs: BTreeMap<char, Vec<u32>> = BTreeMap::new();
    for ((chars, stream), assign) in usable.iter().zip(alignments) {
        for (g, &ci) in stream.groups.iter().zip(assign) {
            let c = chars[ci];
            *votes.entry(c).or_default().entry(g.sound).or_default() += 1;
            runs.entry(c).or_default().push(g.run);
        }
    }
    let best = votes
        .into_iter()
        .map(|(c, v)| {
            let mut winner = (0u32, 0usize);
            for (sound, n) in v {
                if n > winner.1 {
                    winner = (sound, n);
                }
            }
            (c, winner.0)
        })
        .collect();
    let durations = runs
        .into_iter()
        .map(|(c, mut r)| {
            r.sort_unstable();
            (c, r[(r.len() - 1) / 2])
        })
        .collect();
    (best, durations)
}

/// Convenience wrapper around [`MapperModel::train`].
pub fn train_mapper(pairs: &[(String, TokenStream)], alphabet: &[char]) -> Result<MapperModel> {
    MapperModel::train(pairs, alphabet)
}
