//! Instruction-dataset preparation: filter prompts, translate the user turn
//! into sound-token markup, and read/write line-delimited records.
//!
//! Dataset files hold one JSON object per line with the fixed fields `id`,
//! `prompt`, `response`, `lang`, `user_turn_markup` and `meta`; any other
//! fields are carried through untouched. Rejections go to a separate log with
//! one `id<TAB>reason` line each.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::durcodec::{compression_ratio, TokenStream};
use crate::eval::normalize;
use crate::text2sem::{MapperModel, Text2SemError};
use crate::vocab::{ParseError, VocabError, VocabSpec, TASK_TOKEN};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: duplicate record id {id:?}")]
    DuplicateId { id: String, line: usize },
    #[error("record {id:?} was rejected ({reason}) and cannot be built")]
    NotAccepted { id: String, reason: RejectReason },
    #[error("record {id:?}: user turn markup: {source}")]
    Markup {
        id: String,
        #[source]
        source: ParseError,
    },
    #[error("record {id:?}: user turn is not a delimited sound span")]
    UnwrappedMarkup { id: String },
    #[error("record {id:?} has no user turn markup")]
    MissingMarkup { id: String },
    #[error("reject log line {line}: {msg}")]
    RejectLog { line: usize, msg: String },
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Text2Sem(#[from] Text2SemError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub prompt: String,
    pub response: String,
    #[serde(default)]
    pub lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_turn_markup: Option<String>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
    /// Unknown fields, preserved verbatim.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
    #[serde(skip)]
    pub tokens: Option<TokenStream>,
}

impl DatasetRecord {
    pub fn new(id: impl Into<String>, prompt: impl Into<String>, response: impl Into<String>) -> Self {
        DatasetRecord {
            id: id.into(),
            prompt: prompt.into(),
            response: response.into(),
            lang: String::new(),
            user_turn_markup: None,
            meta: BTreeMap::new(),
            extra: BTreeMap::new(),
            tokens: None,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization cannot fail")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    TooLong,
    TooShort,
    MathContent,
    ExcessivePunctuation,
    OutOfAlphabet,
}

impl RejectReason {
    pub const ALL: [RejectReason; 5] = [
        RejectReason::TooLong,
        RejectReason::TooShort,
        RejectReason::MathContent,
        RejectReason::ExcessivePunctuation,
        RejectReason::OutOfAlphabet,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::TooLong => "too_long",
            RejectReason::TooShort => "too_short",
            RejectReason::MathContent => "math_content",
            RejectReason::ExcessivePunctuation => "excessive_punctuation",
            RejectReason::OutOfAlphabet => "out_of_alphabet",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RejectReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RejectReason::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown reject reason {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub max_prompt_chars: usize,
    pub min_prompt_chars: usize,
    /// Largest tolerated share of non-space characters that are neither
    /// letters nor digits.
    pub max_nonalpha_ratio: f64,
    /// When set, the normalized prompt must only use these characters.
    pub alphabet: Option<Vec<char>>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            max_prompt_chars: 512,
            min_prompt_chars: 1,
            max_nonalpha_ratio: 0.30,
            alphabet: None,
        }
    }
}

fn has_math(prompt: &str) -> bool {
    let chars: Vec<char> = prompt.chars().collect();
    // backslash commands such as \frac or \sum
    if chars
        .windows(2)
        .any(|w| w[0] == '\\' && w[1].is_ascii_alphabetic())
    {
        return true;
    }
    // a $...$ span with something inside
    if let Some(open) = prompt.find('$') {
        if let Some(close) = prompt[open + 1..].find('$') {
            if close > 0 {
                return true;
            }
        }
    }
    chars.iter().filter(|c| matches!(c, '=' | '^' | '_')).count() >= 3
}

/// Deterministic, record-local verdict. Rules apply in the order: length,
/// math content, punctuation, alphabet.
pub fn filter(record: &DatasetRecord, cfg: &FilterConfig) -> Verdict {
    let prompt = &record.prompt;
    if prompt.trim().chars().count() < cfg.min_prompt_chars {
        return Verdict::Reject(RejectReason::TooShort);
    }
    if prompt.chars().count() > cfg.max_prompt_chars {
        return Verdict::Reject(RejectReason::TooLong);
    }
    if has_math(prompt) {
        return Verdict::Reject(RejectReason::MathContent);
    }
    let visible = prompt.chars().filter(|c| !c.is_whitespace()).count();
    let symbols = prompt
        .chars()
        .filter(|c| !c.is_whitespace() && !c.is_alphanumeric())
        .count();
    if visible > 0 && symbols as f64 / visible as f64 > cfg.max_nonalpha_ratio {
        return Verdict::Reject(RejectReason::ExcessivePunctuation);
    }
    let normalized = normalize(prompt);
    if normalized.is_empty() {
        return Verdict::Reject(RejectReason::TooShort);
    }
    if let Some(alphabet) = &cfg.alphabet {
        if normalized.chars().any(|c| !alphabet.contains(&c)) {
            return Verdict::Reject(RejectReason::OutOfAlphabet);
        }
    }
    Verdict::Accept
}

/// A record together with its filter verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Screened {
    pub record: DatasetRecord,
    pub verdict: Verdict,
}

pub fn screen(record: DatasetRecord, cfg: &FilterConfig) -> Screened {
    let verdict = filter(&record, cfg);
    Screened { record, verdict }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Accepted(DatasetRecord),
    Rejected { id: String, reason: RejectReason },
}

impl Outcome {
    pub fn id(&self) -> &str {
        match self {
            Outcome::Accepted(r) => &r.id,
            Outcome::Rejected { id, .. } => id,
        }
    }
}

/// Translate the normalized prompt and attach the rendered user turn.
///
/// The user turn is the task token followed by the delimited sound span.
/// The id and response are never touched.
pub fn build_record(screened: &Screened, model: &MapperModel, spec: &VocabSpec) -> Result<Outcome> {
    let record = &screened.record;
    if let Verdict::Reject(reason) = screened.verdict {
        return Err(PipelineError::NotAccepted {
            id: record.id.clone(),
            reason,
        });
    }
    let normalized = normalize(&record.prompt);
    let rejected = |reason| {
        Ok(Outcome::Rejected {
            id: record.id.clone(),
            reason,
        })
    };
    if normalized.is_empty() {
        return rejected(RejectReason::TooShort);
    }
    if normalized.chars().any(|c| !model.contains(c)) {
        return rejected(RejectReason::OutOfAlphabet);
    }
    let tokens = model.translate(&normalized, &spec.codec())?;
    let markup = format!("{TASK_TOKEN}{}", spec.render(&tokens, true)?);
    let mut out = record.clone();
    out.meta.insert("mapper_digest".into(), model.digest().to_hex());
    out.meta
        .insert("sound_frames".into(), tokens.frame_count().to_string());
    out.user_turn_markup = Some(markup);
    out.tokens = Some(tokens);
    Ok(Outcome::Accepted(out))
}

/// Filter then build in one step.
pub fn process_record(
    record: DatasetRecord,
    cfg: &FilterConfig,
    model: &MapperModel,
    spec: &VocabSpec,
) -> Result<Outcome> {
    let screened = screen(record, cfg);
    match screened.verdict {
        Verdict::Reject(reason) => Ok(Outcome::Rejected {
            id: screened.record.id,
            reason,
        }),
        Verdict::Accept => build_record(&screened, model, spec),
    }
}

/// Recover the token stream from a rendered user turn.
pub fn user_turn_stream(id: &str, markup: &str, spec: &VocabSpec) -> Result<TokenStream> {
    let body = markup.strip_prefix(TASK_TOKEN).unwrap_or(markup);
    let offset = markup.len() - body.len();
    let parsed = spec.parse(body).map_err(|mut e| {
        e.offset += offset;
        PipelineError::Markup {
            id: id.to_string(),
            source: e,
        }
    })?;
    if !parsed.wrapped {
        return Err(PipelineError::UnwrappedMarkup { id: id.to_string() });
    }
    Ok(parsed.stream)
}

/// Read line-delimited records; blank lines are skipped, ids must be unique.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|source| PipelineError::Json { line: i + 1, source })?;
        if !seen.insert(record.id.clone()) {
            return Err(PipelineError::DuplicateId {
                id: record.id,
                line: i + 1,
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_dataset<'a, W: Write>(
    mut w: W,
    records: impl IntoIterator<Item = &'a DatasetRecord>,
) -> Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_json_line())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectEntry {
    pub id: String,
    pub reason: RejectReason,
}

pub fn write_reject_log<'a, W: Write>(
    mut w: W,
    entries: impl IntoIterator<Item = &'a RejectEntry>,
) -> Result<()> {
    for e in entries {
        writeln!(w, "{}\t{}", e.id, e.reason)?;
    }
    Ok(())
}

pub fn read_reject_log<R: BufRead>(reader: R) -> Result<Vec<RejectEntry>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (id, reason) = line.split_once('\t').ok_or_else(|| PipelineError::RejectLog {
            line: i + 1,
            msg: "expected `id<TAB>reason`".into(),
        })?;
        let reason = reason
            .parse()
            .map_err(|msg| PipelineError::RejectLog { line: i + 1, msg })?;
        out.push(RejectEntry {
            id: id.to_string(),
            reason,
        });
    }
    Ok(out)
}

/// Width of the token-length histogram buckets, in emitted tokens.
pub const HISTOGRAM_BUCKET: usize = 16;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetStats {
    pub total: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
    /// Bucket start (emitted tokens) → record count.
    pub token_histogram: BTreeMap<usize, usize>,
    pub mean_compression_ratio: Option<f64>,
}

impl DatasetStats {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "records={} accepted={} rejected={}\n",
            self.total,
            self.accepted,
            self.rejected_total()
        );
        for r in RejectReason::ALL {
            s.push_str(&format!(
                "reject.{}={}\n",
                r,
                self.rejected.get(&r).copied().unwrap_or(0)
            ));
        }
        match self.mean_compression_ratio {
            Some(m) => s.push_str(&format!("mean_compression_ratio={m:.6}\n")),
            None => s.push_str("mean_compression_ratio=n/a\n"),
        }
        for (bucket, n) in &self.token_histogram {
            s.push_str(&format!(
                "tokens[{bucket},{})={n}\n",
                bucket + HISTOGRAM_BUCKET
            ));
        }
        s
    }
}

/// Summarize accepted records (tokens from `tokens` or, failing that, the
/// user-turn markup) and reject-log entries.
pub fn dataset_stats(
    records: &[DatasetRecord],
    rejects: &[RejectEntry],
    spec: &VocabSpec,
) -> Result<DatasetStats> {
    let mut stats = DatasetStats {
        total: records.len() + rejects.len(),
        accepted: records.len(),
        ..DatasetStats::default()
    };
    for e in rejects {
        *stats.rejected.entry(e.reason).or_default() += 1;
    }
    let mut ratio_sum = 0.0;
    let mut ratio_n = 0usize;
    for r in records {
        let tokens = match (&r.tokens, &r.user_turn_markup) {
            (Some(t), _) => t.clone(),
            (None, Some(m)) => user_turn_stream(&r.id, m, spec)?,
            (None, None) => return Err(PipelineError::MissingMarkup { id: r.id.clone() }),
        };
        let emitted = tokens.emitted_tokens();
        *stats
            .token_histogram
            .entry(emitted / HISTOGRAM_BUCKET * HISTOGRAM_BUCKET)
            .or_default() += 1;
        if let Some(ratio) = compression_ratio(&tokens, tokens.frame_count()) {
            ratio_sum += ratio;
            ratio_n += 1;
        }
    }
    stats.mean_compression_ratio = (ratio_n > 0).then(|| ratio_sum / ratio_n as f64);
    Ok(stats)
}
