//! In-process batch runner for the dataset pipeline.
//!
//! Records are cut into contiguous batches and pushed onto a work queue that
//! `workers` threads drain. Each attempt may be failed by a seeded injector;
//! a failed attempt can leak part of its results before dying, so the
//! collector dedupes by record id. Finished batches go through a reorder
//! buffer and are flushed strictly in input order, so the output never
//! depends on the worker count or the retry history.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender};
use log::{debug, info, warn};
use thiserror::Error;

use crate::digest::Digest;
use crate::pipeline::{
    process_record, read_dataset, DatasetRecord, FilterConfig, Outcome, PipelineError, RejectEntry,
};
use crate::text2sem::{MapperModel, Text2SemError};
use crate::vocab::{VocabError, VocabSpec};

#[derive(Debug, Error)]
pub enum JobError {
    #[error("invalid job: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: PipelineError,
    },
    #[error("duplicate record id {0:?} across inputs")]
    DuplicateId(String),
    #[error("{} batch(es) exceeded the retry limit; affected ids: {}", .batches, .ids.join(","))]
    RetriesExhausted {
        batches: usize,
        ids: Vec<String>,
        report: Box<JobReport>,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Mapper(#[from] Text2SemError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = JobError> = std::result::Result<T, E>;

/// Scheduling knobs shared by file-based and in-memory jobs.
#[derive(Debug, Clone, PartialEq)]
pub struct JobConfig {
    pub workers: usize,
    pub batch_size: usize,
    pub max_retries: u32,
    /// Probability that an attempt fails. Testing only.
    pub failure_injection_rate: f64,
    pub seed: u64,
}

impl Default for JobConfig {
    fn default() -> Self {
        JobConfig {
            workers: 1,
            batch_size: 64,
            max_retries: 3,
            failure_injection_rate: 0.0,
            seed: 0,
        }
    }
}

impl JobConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(JobError::InvalidSpec("workers must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(JobError::InvalidSpec("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.failure_injection_rate) {
            return Err(JobError::InvalidSpec(format!(
                "failure_injection_rate {} outside [0, 1]",
                self.failure_injection_rate
            )));
        }
        Ok(())
    }

    fn injected_failure(&self, batch: usize, attempt: u32) -> Option<u64> {
        if self.failure_injection_rate <= 0.0 {
            return None;
        }
        let h = Digest::of(format!("inject:{}:{batch}:{attempt}", self.seed).as_bytes()).to_u64();
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        (u < self.failure_injection_rate).then_some(h)
    }
}

/// Read-only state shared by every worker.
#[derive(Debug, Clone)]
pub struct JobResources {
    pub model: MapperModel,
    pub vocab: VocabSpec,
    pub filter: FilterConfig,
}

#[derive(Debug, Clone)]
pub struct JobSpec {
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    /// Defaults to `<output>.rejects`.
    pub rejects: Option<PathBuf>,
    pub mapper: PathBuf,
    /// Defaults to the standard layout when absent.
    pub vocab: Option<PathBuf>,
    pub filter: FilterConfig,
    pub config: JobConfig,
}

impl JobSpec {
    pub fn rejects_path(&self) -> PathBuf {
        self.rejects
            .clone()
            .unwrap_or_else(|| with_suffix(&self.output, ".rejects"))
    }

    pub fn report_path(&self) -> PathBuf {
        with_suffix(&self.output, ".report")
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JobReport {
    pub processed: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub failed: usize,
    /// Attempts re-queued after a failure.
    pub retried: usize,
    /// Leaked partial results dropped by id.
    pub duplicates_dropped: usize,
    pub batches: usize,
    /// Attempts handled by each worker, indexed by worker.
    pub worker_batches: Vec<usize>,
    pub wall_time: Duration,
}

impl fmt::Display for JobReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "processed={}", self.processed)?;
        writeln!(f, "accepted={}", self.accepted)?;
        writeln!(f, "rejected={}", self.rejected)?;
        writeln!(f, "failed={}", self.failed)?;
        writeln!(f, "retried={}", self.retried)?;
        writeln!(f, "duplicates_dropped={}", self.duplicates_dropped)?;
        writeln!(f, "batches={}", self.batches)?;
        let per: Vec<String> = self.worker_batches.iter().map(|n| n.to_string()).collect();
        writeln!(f, "worker_batches={}", per.join(","))?;
        writeln!(f, "wall_time_ms={}", self.wall_time.as_millis())
    }
}

/// Contiguous, order-preserving batches; the last one may be short.
pub fn shard<T>(records: &[T], batch_size: usize) -> Vec<&[T]> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    records.chunks(batch_size).collect()
}

/// Result of an in-memory job, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct JobOutput {
    pub accepted: Vec<DatasetRecord>,
    pub rejects: Vec<RejectEntry>,
    pub report: JobReport,
}

enum Msg {
    Partial {
        batch: usize,
        outcomes: Vec<Outcome>,
    },
    Done {
        batch: usize,
        worker: usize,
        outcomes: Vec<Outcome>,
    },
    Failed {
        batch: usize,
        attempt: u32,
        worker: usize,
    },
    Error(PipelineError),
}

fn worker_loop(
    worker: usize,
    batches: &[&[DatasetRecord]],
    res: &JobResources,
    cfg: &JobConfig,
    work: Receiver<(usize, u32)>,
    results: Sender<Msg>,
) {
    for (batch, attempt) in work.iter() {
        let records = batches[batch];
        // An injected failure dies after a hash-chosen prefix of the batch
        // and leaks what it got through.
        let cut = cfg
            .injected_failure(batch, attempt)
            .map(|h| (h % (records.len() as u64 + 1)) as usize);
        let upto = cut.unwrap_or(records.len());
        let mut outcomes = Vec::with_capacity(upto);
        for r in &records[..upto] {
            match process_record(r.clone(), &res.filter, &res.model, &res.vocab) {
                Ok(o) => outcomes.push(o),
                Err(e) => {
                    let _ = results.send(Msg::Error(e));
                    return;
                }
            }
        }
        let msg = match cut {
            Some(_) => {
                if !outcomes.is_empty() {
                    let _ = results.send(Msg::Partial { batch, outcomes });
                }
                Msg::Failed {
                    batch,
                    attempt,
                    worker,
                }
            }
            None => Msg::Done {
                batch,
                worker,
                outcomes,
            },
        };
        if results.send(msg).is_err() {
            return;
        }
    }
}

/// Per-batch collection state, keyed by record id.
#[derive(Default)]
struct Slot {
    outcomes: HashMap<String, Outcome>,
    done: bool,
}

impl Slot {
    fn absorb(&mut self, outcomes: Vec<Outcome>) -> usize {
        let mut dropped = 0;
        for o in outcomes {
            if self.outcomes.contains_key(o.id()) {
                dropped += 1;
            } else {
                self.outcomes.insert(o.id().to_string(), o);
            }
        }
        dropped
    }
}

/// Run the pipeline over `records`, handing each outcome to `sink` in input
/// order as soon as its batch and all earlier batches are complete.
pub fn run_streaming(
    records: &[DatasetRecord],
    res: &JobResources,
    cfg: &JobConfig,
    mut sink: impl FnMut(&Outcome) -> Result<()>,
) -> Result<JobReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(JobError::DuplicateId(r.id.clone()));
        }
    }
    let batches = shard(records, cfg.batch_size);
    let mut report = JobReport {
        batches: batches.len(),
        worker_batches: vec![0; cfg.workers],
        ..JobReport::default()
    };
    let mut slots: Vec<Slot> = (0..batches.len()).map(|_| Slot::default()).collect();
    let mut exhausted = BTreeSet::new();
    let mut next_flush = 0usize;

    let outcome = std::thread::scope(|scope| -> Result<()> {
        let (work_tx, work_rx) = unbounded::<(usize, u32)>();
        let (res_tx, res_rx) = unbounded::<Msg>();
        for w in 0..cfg.workers {
            let rx = work_rx.clone();
            let tx = res_tx.clone();
            let batches = &batches;
            scope.spawn(move || worker_loop(w, batches, res, cfg, rx, tx));
        }
        drop(work_rx);
        drop(res_tx);
        for b in 0..batches.len() {
            work_tx.send((b, 0)).expect("workers alive");
        }
        let mut pending = batches.len();
        let mut work_tx = Some(work_tx);
        if pending == 0 {
            work_tx = None;
        }
        while pending > 0 {
            let msg = match res_rx.recv() {
                Ok(m) => m,
                Err(_) => break,
            };
            match msg {
                Msg::Partial { batch, outcomes } => {
                    report.duplicates_dropped += slots[batch].absorb(outcomes);
                }
                Msg::Done {
                    batch,
                    worker,
                    outcomes,
                } => {
                    report.worker_batches[worker] += 1;
                    report.duplicates_dropped += slots[batch].absorb(outcomes);
                    slots[batch].done = true;
                    pending -= 1;
                    while next_flush < slots.len() && slots[next_flush].done {
                        let slot = std::mem::take(&mut slots[next_flush].outcomes);
                        for r in batches[next_flush] {
                            let o = &slot[&r.id];
                            match o {
                                Outcome::Accepted(_) => report.accepted += 1,
                                Outcome::Rejected { .. } => report.rejected += 1,
                            }
                            sink(o)?;
                        }
                        next_flush += 1;
                    }
                }
                Msg::Failed {
                    batch,
                    attempt,
                    worker,
                } => {
                    report.worker_batches[worker] += 1;
                    if attempt < cfg.max_retries {
                        debug!("batch {batch} attempt {attempt} failed; retrying");
                        report.retried += 1;
                        if let Some(tx) = &work_tx {
                            tx.send((batch, attempt + 1)).expect("workers alive");
                        }
                    } else {
                        warn!("batch {batch} failed after {} attempts", attempt + 1);
                        exhausted.insert(batch);
                        pending -= 1;
                    }
                }
                Msg::Error(e) => return Err(e.into()),
            }
            if pending == 0 {
                work_tx = None;
            }
        }
        drop(work_tx);
        Ok(())
    });
    outcome?;

    if !exhausted.is_empty() {
        // Batches completed after the first exhausted one never reached the
        // sink; count them anyway so the totals reconcile.
        for slot in slots[next_flush..].iter().filter(|s| s.done) {
            for o in slot.outcomes.values() {
                match o {
                    Outcome::Accepted(_) => report.accepted += 1,
                    Outcome::Rejected { .. } => report.rejected += 1,
                }
            }
        }
        let ids: Vec<String> = exhausted
            .iter()
            .flat_map(|&b| batches[b].iter().map(|r| r.id.clone()))
            .collect();
        report.failed = ids.len();
        report.processed = report.accepted + report.rejected + report.failed;
        report.wall_time = start.elapsed();
        return Err(JobError::RetriesExhausted {
            batches: exhausted.len(),
            ids,
            report: Box::new(report),
        });
    }
    report.processed = report.accepted + report.rejected;
    report.wall_time = start.elapsed();
    Ok(report)
}

/// Run a job entirely in memory.
pub fn run_records(
    records: &[DatasetRecord],
    res: &JobResources,
    cfg: &JobConfig,
) -> Result<JobOutput> {
    let mut accepted = Vec::new();
    let mut rejects = Vec::new();
    let report = run_streaming(records, res, cfg, |o| {
        match o {
            Outcome::Accepted(r) => accepted.push(r.clone()),
            Outcome::Rejected { id, reason } => rejects.push(RejectEntry {
                id: id.clone(),
                reason: *reason,
            }),
        }
        Ok(())
    })?;
    Ok(JobOutput {
        accepted,
        rejects,
        report,
    })
}

fn tmp_path(path: &Path) -> PathBuf {
    with_suffix(path, ".tmp")
}

/// Load inputs and models, run the job, and write the dataset, reject log and
/// report. Dataset and reject log appear only if the job succeeds.
pub fn run_job(spec: &JobSpec) -> Result<JobReport> {
    spec.config.validate()?;
    if spec.inputs.is_empty() {
        return Err(JobError::InvalidSpec("no input files".into()));
    }
    let mut records = Vec::new();
    for path in &spec.inputs {
        let file = File::open(path).map_err(|e| JobError::Input {
            path: path.clone(),
            source: e.into(),
        })?;
        let mut batch = read_dataset(BufReader::new(file)).map_err(|source| JobError::Input {
            path: path.clone(),
            source,
        })?;
        records.append(&mut batch);
    }
    let model = MapperModel::load(&spec.mapper)?;
    let vocab = match &spec.vocab {
        Some(p) => VocabSpec::load(p)?,
        None => VocabSpec::default(),
    };
    let res = JobResources {
        model,
        vocab,
        filter: spec.filter.clone(),
    };
    info!(
        "job: {} records, {} workers, batch size {}",
        records.len(),
        spec.config.workers,
        spec.config.batch_size
    );

    let out_tmp = tmp_path(&spec.output);
    let rej_path = spec.rejects_path();
    let rej_tmp = tmp_path(&rej_path);
    let mut out = BufWriter::new(File::create(&out_tmp)?);
    let mut rej = BufWriter::new(File::create(&rej_tmp)?);
    let result = run_streaming(&records, &res, &spec.config, |o| {
        match o {
            Outcome::Accepted(r) => writeln!(out, "{}", r.to_json_line())?,
            Outcome::Rejected { id, reason } => writeln!(rej, "{id}\t{reason}")?,
        }
        Ok(())
    });
    let finish = |report: &JobReport| std::fs::write(spec.report_path(), report.to_string());
    match result {
        Ok(report) => {
            out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
            rej.into_inner().map_err(|e| e.into_error())?.sync_all()?;
            std::fs::rename(&out_tmp, &spec.output)?;
            std::fs::rename(&rej_tmp, &rej_path)?;
            finish(&report)?;
            Ok(report)
        }
        Err(e) => {
            drop(out);
            drop(rej);
            let _ = std::fs::remove_file(&out_tmp);
            let _ = std::fs::remove_file(&rej_tmp);
            if let JobError::RetriesExhausted { report, .. } = &e {
                finish(report)?;
            }
            Err(e)
        }
    }
}
