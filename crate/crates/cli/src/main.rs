//! `semtok`: every stage of the semantic-token data path as a subcommand.
//!
//! Machine-readable results go to files, a short human summary to stdout.
//! Exit status is 0 on success, 1 on usage errors (bad flags, bad config
//! keys) and 2 on data errors.

mod config;

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use semtok::eval::{self, CorpusReport};
use semtok::orchestrator::{self, JobConfig, JobSpec};
use semtok::pipeline::{self, FilterConfig, RejectEntry, Verdict};
use semtok::rvq::{self, read_features, write_features, Quantizer, SemanticTokenSeq, TrainConfig};
use semtok::text2sem::{self, MapperModel, OracleConfig};
use semtok::vocab::VocabSpec;
use semtok::TokenStream;

use config::FileConfig;

#[derive(Parser, Debug)]
#[command(name = "semtok", version, about = "Semantic speech-token toolkit")]
struct Cli {
    /// Flat TOML file with default settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Features → quantizer: fit a residual vector quantizer.
    TrainQuantizer(TrainQuantizerArgs),
    /// Quantizer → larger quantizer: grow every codebook by a factor.
    ExpandCodebook(ExpandArgs),
    /// Features → semantic tokens, plus a per-frame residual report.
    Encode(EncodeArgs),
    /// Semantic tokens → reconstructed features.
    Decode(DecodeArgs),
    /// Text lines → synthetic oracle features (concatenated).
    Synth(SynthArgs),
    /// Text lines → mapper trained on oracle speech-path tokens.
    TrainMapper(TrainMapperArgs),
    /// Text lines → sound-token markup lines.
    Translate(TranslateArgs),
    /// Dataset → accepted records and a reject log (no translation).
    Filter(FilterArgs),
    /// Dataset → instruction dataset with sound-token user turns.
    GenDataset(GenDatasetArgs),
    /// Word error rate over line-aligned text files.
    EvalWer(EvalTextArgs),
    /// Character error rate over line-aligned text files.
    EvalCer(EvalTextArgs),
    /// Token error rate over line-aligned markup files.
    EvalTer(EvalTerArgs),
    /// Summary of a generated dataset and its reject log.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
struct TrainQuantizerArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    codebook_size: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    convergence_tol: Option<f64>,
}

#[derive(Args, Debug)]
struct ExpandArgs {
    #[arg(long)]
    quantizer: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    factor: Option<usize>,
    /// Defaults to sqrt(2 / dim).
    #[arg(long)]
    noise_std: Option<f64>,
    /// Fresh random entries instead of perturbed copies (baseline).
    #[arg(long)]
    naive: bool,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    quantizer: Option<PathBuf>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Per-frame residual norms, one line per frame. Defaults to `<out>.residuals`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long)]
    quantizer: Option<PathBuf>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Per-coordinate noise added to oracle frames.
    #[arg(long)]
    oracle_noise_std: Option<f64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[command(flatten)]
    oracle: OracleArgs,
}

#[derive(Args, Debug)]
struct TrainMapperArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    quantizer: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[command(flatten)]
    oracle: OracleArgs,
}

#[derive(Args, Debug)]
struct TranslateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mapper: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FilterFlags {
    #[arg(long)]
    max_prompt_chars: Option<usize>,
    #[arg(long)]
    min_prompt_chars: Option<usize>,
    #[arg(long)]
    max_nonalpha_ratio: Option<f64>,
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to `<out>.rejects`.
    #[arg(long)]
    rejects: Option<PathBuf>,
    /// Restrict prompts to this mapper's alphabet.
    #[arg(long)]
    mapper: Option<PathBuf>,
    #[command(flatten)]
    filter: FilterFlags,
}

#[derive(Args, Debug)]
struct GenDatasetArgs {
    #[arg(long = "in", required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to `<out>.rejects`.
    #[arg(long)]
    rejects: Option<PathBuf>,
    #[arg(long)]
    mapper: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    failure_injection_rate: Option<f64>,
    #[command(flatten)]
    filter: FilterFlags,
}

#[derive(Args, Debug)]
struct EvalTextArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    /// Also write the summary line here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalTerArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Defaults to `<in>.rejects` when that file exists.
    #[arg(long)]
    rejects: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error plus the exit status it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn usage(err: impl Into<anyhow::Error>) -> Self {
        Failure { code: 1, err: err.into() }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: 2, err: e.into() }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

/// Resolved settings: flag, then config file, then default.
struct Ctx {
    file: FileConfig,
    seed: Option<u64>,
    workers: Option<usize>,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.seed.or(self.file.seed).unwrap_or(0)
    }

    fn path(&self, flag: &Option<PathBuf>, from_file: &Option<PathBuf>, name: &str) -> CliResult<PathBuf> {
        flag.clone()
            .or_else(|| from_file.clone())
            .ok_or_else(|| Failure::usage(anyhow!("--{name} is required (flag or config key)")))
    }

    fn vocab(&self, flag: &Option<PathBuf>) -> CliResult<VocabSpec> {
        match flag.clone().or_else(|| self.file.vocab.clone()) {
            Some(p) => Ok(VocabSpec::load(&p).with_context(|| format!("loading vocabulary {}", p.display()))?),
            None => Ok(VocabSpec::default()),
        }
    }

    fn quantizer(&self, flag: &Option<PathBuf>) -> CliResult<Quantizer> {
        let p = self.path(flag, &self.file.quantizer, "quantizer")?;
        Ok(Quantizer::load(&p).with_context(|| format!("loading quantizer {}", p.display()))?)
    }

    fn mapper(&self, flag: &Option<PathBuf>) -> CliResult<MapperModel> {
        let p = self.path(flag, &self.file.mapper, "mapper")?;
        Ok(MapperModel::load(&p).with_context(|| format!("loading mapper {}", p.display()))?)
    }

    fn oracle(&self, dim: usize, args: &OracleArgs) -> OracleConfig {
        let d = OracleConfig::default();
        OracleConfig {
            dim,
            min_duration: self.file.oracle_min_duration.unwrap_or(d.min_duration),
            max_duration: self.file.oracle_max_duration.unwrap_or(d.max_duration),
            noise_std: args
                .oracle_noise_std
                .or(self.file.oracle_noise_std)
                .unwrap_or(d.noise_std),
            seed: self.seed(),
            alphabet: d.alphabet,
        }
    }

    fn filter(&self, flags: &FilterFlags) -> FilterConfig {
        let d = FilterConfig::default();
        FilterConfig {
            max_prompt_chars: flags
                .max_prompt_chars
                .or(self.file.max_prompt_chars)
                .unwrap_or(d.max_prompt_chars),
            min_prompt_chars: flags
                .min_prompt_chars
                .or(self.file.min_prompt_chars)
                .unwrap_or(d.min_prompt_chars),
            max_nonalpha_ratio: flags
                .max_nonalpha_ratio
                .or(self.file.max_nonalpha_ratio)
                .unwrap_or(d.max_nonalpha_ratio),
            alphabet: None,
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(|e| Failure::usage(anyhow!("config {e}")))?,
        None => FileConfig::default(),
    };
    let ctx = Ctx {
        file,
        seed: cli.seed,
        workers: cli.workers,
    };
    match cli.command {
        Command::TrainQuantizer(a) => train_quantizer(&ctx, a),
        Command::ExpandCodebook(a) => expand(&ctx, a),
        Command::Encode(a) => encode(&ctx, a),
        Command::Decode(a) => decode(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
        Command::TrainMapper(a) => train_mapper(&ctx, a),
        Command::Translate(a) => translate(&ctx, a),
        Command::Filter(a) => filter(&ctx, a),
        Command::GenDataset(a) => gen_dataset(&ctx, a),
        Command::EvalWer(a) => eval_text(a, "wer", eval::wer),
        Command::EvalCer(a) => eval_text(a, "cer", eval::cer),
        Command::EvalTer(a) => eval_ter(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
    }
}

fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(f)
        .lines()
        .enumerate()
        .map(|(i, l)| l.with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn train_quantizer(ctx: &Ctx, a: TrainQuantizerArgs) -> CliResult {
    let d = TrainConfig::default();
    let f = &ctx.file;
    let cfg = TrainConfig {
        levels: a.levels.or(f.levels).unwrap_or(d.levels),
        codebook_size: a.codebook_size.or(f.codebook_size).unwrap_or(d.codebook_size),
        max_iters: a.max_iters.or(f.max_iters).unwrap_or(d.max_iters),
        convergence_tol: a.convergence_tol.or(f.convergence_tol).unwrap_or(d.convergence_tol),
        seed: ctx.seed(),
    };
    cfg.validate().map_err(Failure::usage)?;
    let data = read_features(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let (q, report) = rvq::train_quantizer_with_report(&data, &cfg)?;
    q.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "trained {} level(s) of {} entries on {} frames (dim {})",
        cfg.levels,
        cfg.codebook_size,
        data.len(),
        data.dim()
    );
    for (l, lr) in report.levels.iter().enumerate() {
        println!(
            "level {l}: iterations={} converged={} reseeded={} residual_mse={:.6}",
            lr.mse_history.len(),
            lr.converged,
            lr.reseeded,
            lr.residual_mse
        );
    }
    Ok(())
}

fn expand(ctx: &Ctx, a: ExpandArgs) -> CliResult {
    let q = ctx.quantizer(&a.quantizer)?;
    let factor = a.factor.or(ctx.file.expand_factor).unwrap_or(4);
    let std = a.noise_std.or(ctx.file.noise_std);
    let grown = if a.naive {
        rvq::naive_expand(&q, factor, std, ctx.seed())
    } else {
        rvq::expand_codebook(&q, factor, std, ctx.seed())
    }
    .map_err(Failure::usage)?;
    grown.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let sizes: Vec<String> = grown.codebook_sizes().iter().map(|k| k.to_string()).collect();
    println!("codebook sizes: {}", sizes.join(","));
    Ok(())
}

fn encode(ctx: &Ctx, a: EncodeArgs) -> CliResult {
    let q = ctx.quantizer(&a.quantizer)?;
    let data = read_features(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let report = q.encode_with_report(&data)?;
    fs::write(&a.out, report.tokens.to_text()).with_context(|| format!("writing {}", a.out.display()))?;
    let report_path = a.report.unwrap_or_else(|| with_suffix(&a.out, ".residuals"));
    let mut w = create(&report_path)?;
    for t in 0..report.tokens.len() {
        let norms: Vec<String> = report.frame_norms(t).iter().map(|n| n.to_string()).collect();
        writeln!(w, "{}", norms.join(" "))?;
    }
    w.flush()?;
    let mean = if report.tokens.is_empty() {
        0.0
    } else {
        (0..report.tokens.len())
            .map(|t| report.final_residual_norm(t))
            .sum::<f64>()
            / report.tokens.len() as f64
    };
    println!(
        "encoded {} frames over {} level(s); mean final residual norm {mean:.6}",
        report.tokens.len(),
        report.tokens.levels()
    );
    Ok(())
}

fn decode(ctx: &Ctx, a: DecodeArgs) -> CliResult {
    let q = ctx.quantizer(&a.quantizer)?;
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let tokens = SemanticTokenSeq::from_text(&text).with_context(|| format!("parsing {}", a.input.display()))?;
    let feats = q.decode(&tokens)?;
    write_features(&a.out, &feats).with_context(|| format!("writing {}", a.out.display()))?;
    println!("decoded {} frames (dim {})", feats.len(), feats.dim());
    Ok(())
}

fn synth(ctx: &Ctx, a: SynthArgs) -> CliResult {
    let cfg = ctx.oracle(a.dim, &a.oracle);
    cfg.validate().map_err(Failure::usage)?;
    let mut all = rvq::FeatureSeq::empty(a.dim)?;
    let lines = read_lines(&a.input)?;
    for (i, line) in lines.iter().enumerate() {
        let text = eval::normalize(line);
        let feats = text2sem::speak(&text, &cfg)
            .with_context(|| format!("{}:{}", a.input.display(), i + 1))?;
        all.extend(&feats)?;
    }
    write_features(&a.out, &all).with_context(|| format!("writing {}", a.out.display()))?;
    println!("synthesized {} frames from {} line(s)", all.len(), lines.len());
    Ok(())
}

fn train_mapper(ctx: &Ctx, a: TrainMapperArgs) -> CliResult {
    let q = ctx.quantizer(&a.quantizer)?;
    let vocab = ctx.vocab(&a.vocab)?;
    let codec = vocab.codec();
    let cfg = ctx.oracle(q.dim(), &a.oracle);
    cfg.validate().map_err(Failure::usage)?;
    let mut pairs = Vec::new();
    for (i, line) in read_lines(&a.input)?.iter().enumerate() {
        let text = eval::normalize(line);
        if text.is_empty() {
            continue;
        }
        let stream = text2sem::speech_path(&text, &cfg, &q, &codec)
            .with_context(|| format!("{}:{}", a.input.display(), i + 1))?;
        pairs.push((text, stream));
    }
    let model = MapperModel::train(&pairs, &cfg.alphabet)?;
    model.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let diag = &model.diagnostics;
    println!(
        "mapper: {} pairs, {} skipped, {} iteration(s), converged={}",
        pairs.len(),
        diag.skipped_pairs,
        diag.iterations,
        diag.converged
    );
    Ok(())
}

fn translate(ctx: &Ctx, a: TranslateArgs) -> CliResult {
    let model = ctx.mapper(&a.mapper)?;
    let vocab = ctx.vocab(&a.vocab)?;
    let codec = vocab.codec();
    let mut w = create(&a.out)?;
    let lines = read_lines(&a.input)?;
    let mut frames = 0usize;
    for (i, line) in lines.iter().enumerate() {
        let stream = model
            .translate(&eval::normalize(line), &codec)
            .with_context(|| format!("{}:{}", a.input.display(), i + 1))?;
        frames += stream.frame_count();
        writeln!(w, "{}", vocab.render(&stream, true)?)?;
    }
    w.flush()?;
    println!("translated {} line(s) into {frames} frames", lines.len());
    Ok(())
}

fn read_dataset(path: &Path) -> anyhow::Result<Vec<pipeline::DatasetRecord>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    pipeline::read_dataset(BufReader::new(f)).with_context(|| path.display().to_string())
}

fn filter(ctx: &Ctx, a: FilterArgs) -> CliResult {
    let mut cfg = ctx.filter(&a.filter);
    if a.mapper.is_some() || ctx.file.mapper.is_some() {
        cfg.alphabet = Some(ctx.mapper(&a.mapper)?.alphabet());
    }
    let records = read_dataset(&a.input)?;
    let total = records.len();
    let mut out = create(&a.out)?;
    let mut rejects = Vec::new();
    for r in records {
        match pipeline::filter(&r, &cfg) {
            Verdict::Accept => writeln!(out, "{}", r.to_json_line())?,
            Verdict::Reject(reason) => rejects.push(RejectEntry { id: r.id, reason }),
        }
    }
    out.flush()?;
    let rej_path = a.rejects.unwrap_or_else(|| with_suffix(&a.out, ".rejects"));
    let mut w = create(&rej_path)?;
    pipeline::write_reject_log(&mut w, &rejects)?;
    w.flush()?;
    println!("records={total} accepted={} rejected={}", total - rejects.len(), rejects.len());
    Ok(())
}

fn gen_dataset(ctx: &Ctx, a: GenDatasetArgs) -> CliResult {
    let f = &ctx.file;
    let d = JobConfig::default();
    let config = JobConfig {
        workers: ctx.workers.or(f.workers).unwrap_or(d.workers),
        batch_size: a.batch_size.or(f.batch_size).unwrap_or(d.batch_size),
        max_retries: a.max_retries.or(f.max_retries).unwrap_or(d.max_retries),
        failure_injection_rate: a
            .failure_injection_rate
            .or(f.failure_injection_rate)
            .unwrap_or(d.failure_injection_rate),
        seed: ctx.seed(),
    };
    config.validate().map_err(Failure::usage)?;
    let spec = JobSpec {
        inputs: a.input,
        output: a.out,
        rejects: a.rejects,
        mapper: ctx.path(&a.mapper, &f.mapper, "mapper")?,
        vocab: a.vocab.or_else(|| f.vocab.clone()),
        filter: ctx.filter(&a.filter),
        config,
    };
    let report = orchestrator::run_job(&spec)?;
    print!("{report}");
    Ok(())
}

fn eval_text(
    a: EvalTextArgs,
    metric: &str,
    f: fn(&str, &str) -> Result<eval::ErrorRateReport, eval::EvalError>,
) -> CliResult {
    let refs = read_lines(&a.reference)?;
    let hyps = read_lines(&a.hyp)?;
    check_aligned(&a.reference, refs.len(), &a.hyp, hyps.len())?;
    let mut total = CorpusReport::default();
    for (i, (r, h)) in refs.iter().zip(&hyps).enumerate() {
        let rep = f(r, h).with_context(|| format!("{}:{}", a.reference.display(), i + 1))?;
        total.add(&rep);
    }
    emit_summary(&total.summary(metric), a.out.as_deref())
}

fn check_aligned(r: &Path, nr: usize, h: &Path, nh: usize) -> anyhow::Result<()> {
    if nr != nh {
        bail!("{} has {nr} lines but {} has {nh}", r.display(), h.display());
    }
    Ok(())
}

fn emit_summary(summary: &str, out: Option<&Path>) -> CliResult {
    print!("{summary}");
    if let Some(p) = out {
        fs::write(p, summary).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn parse_markup_lines(path: &Path, vocab: &VocabSpec) -> anyhow::Result<Vec<TokenStream>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, line)| {
            vocab
                .parse(line)
                .map(|p| p.stream)
                .map_err(|e| anyhow!("{}:{}: {e}", path.display(), i + 1))
        })
        .collect()
}

fn eval_ter(ctx: &Ctx, a: EvalTerArgs) -> CliResult {
    let vocab = ctx.vocab(&a.vocab)?;
    let refs = parse_markup_lines(&a.reference, &vocab)?;
    let hyps = parse_markup_lines(&a.hyp, &vocab)?;
    check_aligned(&a.reference, refs.len(), &a.hyp, hyps.len())?;
    let mut total = CorpusReport::default();
    for (i, (r, h)) in refs.iter().zip(&hyps).enumerate() {
        let rep = eval::ter(r, h).with_context(|| format!("{}:{}", a.reference.display(), i + 1))?;
        total.add(&rep);
    }
    emit_summary(&total.summary("ter"), a.out.as_deref())
}

fn stats(ctx: &Ctx, a: StatsArgs) -> CliResult {
    let vocab = ctx.vocab(&a.vocab)?;
    let records = read_dataset(&a.input)?;
    let rej_path = a.rejects.clone().or_else(|| {
        let p = with_suffix(&a.input, ".rejects");
        p.exists().then_some(p)
    });
    let rejects = match &rej_path {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            pipeline::read_reject_log(BufReader::new(f)).with_context(|| p.display().to_string())?
        }
        None => Vec::new(),
    };
    let s = pipeline::dataset_stats(&records, &rejects, &vocab)?;
    emit_summary(&s.summary(), a.out.as_deref())
}
