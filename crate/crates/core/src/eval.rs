//! Text normalization and edit-distance error rates.
//!
//! Transcripts are lower-cased and stripped of every character that is not a
//! letter, digit or whitespace before scoring. WER works on space-separated
//! words, CER on characters (single inter-word spaces count), TER on the
//! decompressed sound ids of two token streams.

use std::fmt;

use thiserror::Error;

use crate::durcodec::TokenStream;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("undefined rate: reference is empty")]
    EmptyReference,
    #[error("{refs} reference lines but {hyps} hypothesis lines")]
    LineCountMismatch { refs: usize, hyps: usize },
}

/// Lower-case, drop everything that is not a letter, digit or whitespace,
/// collapse whitespace runs to one space and trim.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else if c.is_alphanumeric() {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

/// Edit counts from a minimal unit-cost alignment of hypothesis to reference.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorRateReport {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
    pub rate: f64,
}

impl ErrorRateReport {
    fn from_counts(substitutions: usize, insertions: usize, deletions: usize, n: usize) -> Self {
        ErrorRateReport {
            substitutions,
            insertions,
            deletions,
            reference_length: n,
            rate: (substitutions + insertions + deletions) as f64 / n as f64,
        }
    }

    pub fn distance(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

impl fmt::Display for ErrorRateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "S={} I={} D={} N={} rate={:.6}",
            self.substitutions, self.insertions, self.deletions, self.reference_length, self.rate
        )
    }
}

/// Minimal edit alignment; returns (substitutions, insertions, deletions).
///
/// Among equal-cost alignments the backtrace prefers match/substitution, then
/// deletion, then insertion.
pub fn edit_counts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> (usize, usize, usize) {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut dp = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        dp[i * w] = i;
        for j in 1..=m {
            let sub = dp[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = dp[(i - 1) * w + j] + 1;
            let ins = dp[i * w + j - 1] + 1;
            dp[i * w + j] = sub.min(del).min(ins);
        }
    }
    let (mut i, mut j) = (n, m);
    let (mut s, mut ins, mut del) = (0, 0, 0);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 {
            let diff = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if dp[(i - 1) * w + j - 1] + diff == here {
                s += diff;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * w + j] + 1 == here {
            del += 1;
            i -= 1;
        } else {
            ins += 1;
            j -= 1;
        }
    }
    (s, ins, del)
}

fn report<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<ErrorRateReport, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let (s, i, d) = edit_counts(reference, hypothesis);
    Ok(ErrorRateReport::from_counts(s, i, d, reference.len()))
}

pub fn wer(reference: &str, hypothesis: &str) -> Result<ErrorRateReport, EvalError> {
    let r = normalize(reference);
    let h = normalize(hypothesis);
    let rw: Vec<&str> = r.split(' ').filter(|w| !w.is_empty()).collect();
    let hw: Vec<&str> = h.split(' ').filter(|w| !w.is_empty()).collect();
    report(&rw, &hw)
}

pub fn cer(reference: &str, hypothesis: &str) -> Result<ErrorRateReport, EvalError> {
    let r: Vec<char> = normalize(reference).chars().collect();
    let h: Vec<char> = normalize(hypothesis).chars().collect();
    report(&r, &h)
}

pub fn ter(reference: &TokenStream, hypothesis: &TokenStream) -> Result<ErrorRateReport, EvalError> {
    report(&reference.expand(), &hypothesis.expand())
}

/// Corpus-level totals: counts are summed, the rate is recomputed from sums.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CorpusReport {
    pub pairs: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
}

impl CorpusReport {
    pub fn add(&mut self, r: &ErrorRateReport) {
        self.pairs += 1;
        self.substitutions += r.substitutions;
        self.insertions += r.insertions;
        self.deletions += r.deletions;
        self.reference_length += r.reference_length;
    }

    pub fn rate(&self) -> Option<f64> {
        (self.reference_length > 0).then(|| {
            (self.substitutions + self.insertions + self.deletions) as f64
                / self.reference_length as f64
        })
    }

    /// Plain-text summary line for `metric`.
    pub fn summary(&self, metric: &str) -> String {
        format!(
            "{metric}: pairs={} S={} I={} D={} N={} rate={:.6}\n",
            self.pairs,
            self.substitutions,
            self.insertions,
            self.deletions,
            self.reference_length,
            self.rate().unwrap_or(f64::NAN)
        )
    }
}

/// Score line-aligned reference/hypothesis lists with `metric`.
pub fn corpus<F>(refs: &[&str], hyps: &[&str], metric: F) -> Result<CorpusReport, EvalError>
where
    F: Fn(&str, &str) -> Result<ErrorRateReport, EvalError>,
{
    if refs.len() != hyps.len() {
        return Err(EvalError::LineCountMismatch {
            refs: refs.len(),
            hyps: hyps.len(),
        });
    }
    let mut total = CorpusReport::default();
    for (r, h) in refs.iter().zip(hyps) {
        total.add(&metric(r, h)?);
    }
    Ok(total)
}
