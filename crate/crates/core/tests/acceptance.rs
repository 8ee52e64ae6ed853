//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each; exits non-zero if any fails.

use std::collections::{BTreeSet, HashMap};
use std::io::BufReader;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use semtok::digest::Digest;
use semtok::eval::{self, normalize};
use semtok::orchestrator::{self, JobConfig, JobResources, JobSpec};
use semtok::pipeline::{self, DatasetRecord, FilterConfig, RejectReason};
use semtok::rvq::{self, Codebook, FeatureSeq, Quantizer, TrainConfig};
use semtok::text2sem::{self, synthetic_sentences, MapperModel, OracleConfig};
use semtok::vocab::{VocabSpec, TASK_TOKEN};
use semtok::{DurationCodec, Group, TokenStream};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f32> {
    let normal = Normal::new(0.0, std).unwrap();
    (0..n).map(|_| normal.sample(rng) as f32).collect()
}

fn random_quantizer(rng: &mut ChaCha8Rng, dim: usize, levels: usize, k: usize) -> Quantizer {
    let codebooks = (0..levels)
        .map(|l| {
            let mut entries = gaussian(rng, k * dim, 1.0 / (l + 1) as f64);
            entries[..dim].fill(0.0);
            Codebook::new(l, dim, entries).unwrap()
        })
        .collect();
    Quantizer::new(codebooks, Digest::of(b"random quantizer")).unwrap()
}

/// Frames drawn around `centers` random centers.
fn mixture(rng: &mut ChaCha8Rng, centers: &[Vec<f32>], n: usize, std: f64) -> FeatureSeq {
    let dim = centers[0].len();
    let noise = Normal::new(0.0, std).unwrap();
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let c = &centers[rng.random_range(0..centers.len())];
        data.extend(c.iter().map(|&v| (v as f64 + noise.sample(rng)) as f32));
    }
    FeatureSeq::new(dim, data).unwrap()
}

fn centers(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..count).map(|_| gaussian(rng, dim, 1.0)).collect()
}

/// Plain nearest-entry search over every codebook, written independently of
/// the library's encoder.
fn brute_force_encode(q: &Quantizer, frame: &[f32]) -> Vec<u32> {
    let mut residual: Vec<f64> = frame.iter().map(|&v| v as f64).collect();
    let mut out = Vec::new();
    for cb in q.codebooks() {
        let mut best = (0usize, f64::INFINITY);
        for k in 0..cb.size() {
            let d: f64 = residual
                .iter()
                .zip(cb.entry(k))
                .map(|(&r, &e)| (r - e as f64) * (r - e as f64))
                .sum();
            if d < best.1 {
                best = (k, d);
            }
        }
        for (r, &e) in residual.iter_mut().zip(cb.entry(best.0)) {
            *r -= e as f64;
        }
        out.push(best.0 as u32);
    }
    out
}

fn criterion_1_and_2() -> (Outcome, Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let q = random_quantizer(&mut rng, 64, 3, 32);
    let data = FeatureSeq::new(64, gaussian(&mut rng, 1000 * 64, 1.0)).unwrap();
    let start = Instant::now();
    let report = q.encode_with_report(&data).unwrap();
    let mut mismatches = 0;
    for t in 0..data.len() {
        let expected = brute_force_encode(&q, data.frame(t));
        for (l, &idx) in expected.iter().enumerate() {
            if report.tokens.level(l)[t] != idx {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let c1 = ensure(mismatches == 0, || format!("{mismatches} index mismatches"))
        .and_then(|_| within(elapsed, Duration::from_secs(5)))
        .map(|_| format!("3000 indices match, {elapsed:.2?}"));

    let mut violations = 0;
    for t in 0..data.len() {
        let norms = report.frame_norms(t);
        violations += norms.windows(2).filter(|w| w[1] > w[0]).count();
    }
    let c2 = ensure(violations == 0, || format!("{violations} violations"))
        .map(|_| "1000 frames, 0 violations".to_string());
    (c1, c2)
}

/// Shared K=512 fixture for the expansion criteria. The quantizer is fitted
/// on one cluster population; the expansion data and held-out frames come
/// from a second population around the same non-zero mean, as when a trained
/// quantizer is grown for a new language.
struct ExpansionFixture {
    expansion: FeatureSeq,
    held_out: FeatureSeq,
    q: Quantizer,
    build_time: Duration,
}

fn expansion_fixture(seed: u64, held_out: usize) -> ExpansionFixture {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let mean = gaussian(&mut rng, 64, 1.0);
    let population = |rng: &mut ChaCha8Rng| -> Vec<Vec<f32>> {
        centers(rng, 2048, 64)
            .into_iter()
            .map(|c| c.iter().zip(&mean).map(|(a, b)| a + b).collect())
            .collect()
    };
    let original = population(&mut rng);
    let shifted = population(&mut rng);
    let train = mixture(&mut rng, &original, 12_000, 0.5);
    let expansion = mixture(&mut rng, &shifted, 12_000, 0.5);
    let held_out = mixture(&mut rng, &shifted, held_out, 0.5);
    let cfg = TrainConfig {
        levels: 1,
        codebook_size: 512,
        max_iters: 8,
        convergence_tol: 1e-3,
        seed,
    };
    let q = rvq::train_quantizer(&train, &cfg).unwrap();
    ExpansionFixture {
        expansion,
        held_out,
        q,
        build_time: start.elapsed(),
    }
}

fn criterion_3(fx: &ExpansionFixture) -> Outcome {
    let grown = rvq::expand_codebook(&fx.q, 4, None, 7).map_err(|e| e.to_string())?;
    ensure(grown.codebook_sizes().iter().all(|&k| k == 2048), || {
        format!("sizes {:?}", grown.codebook_sizes())
    })?;
    for (a, b) in fx.q.codebooks().iter().zip(grown.codebooks()) {
        let same = a
            .entries()
            .iter()
            .zip(&b.entries()[..a.entries().len()])
            .all(|(x, y)| x.to_bits() == y.to_bits());
        ensure(same, || format!("level {} prefix changed", a.level()))?;
    }
    let before = fx.q.encode_with_report(&fx.held_out).unwrap();
    let after = grown.encode_with_report(&fx.held_out).unwrap();
    let violations = (0..fx.held_out.len())
        .filter(|&t| after.frame_norms(t)[1] > before.frame_norms(t)[1])
        .count();
    ensure(violations == 0, || format!("{violations} frames got worse"))?;
    Ok(format!(
        "K 512 -> 2048, prefix bit-identical, {} held-out frames, 0 violations",
        fx.held_out.len()
    ))
}

fn criterion_4(first: &ExpansionFixture) -> Outcome {
    let start = Instant::now();
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 0..5u64 {
        let owned;
        let fx = if seed == 0 {
            first
        } else {
            owned = expansion_fixture(seed, 4_000);
            &owned
        };
        let level0 = |q: &Quantizer| -> f64 {
            let (re, _) = rvq::retrain(q, &fx.expansion, 1, false).unwrap();
            re.utilization(&fx.held_out).unwrap()[0].normalized_entropy
        };
        let dup = level0(&rvq::expand_codebook(&fx.q, 4, None, seed).unwrap());
        let naive = level0(&rvq::naive_expand(&fx.q, 4, None, seed).unwrap());
        if dup > naive {
            wins += 1;
        }
        detail.push(format!("{dup:.3}/{naive:.3}"));
    }
    let elapsed = first.build_time + start.elapsed();
    ensure(wins >= 4, || format!("only {wins}/5 wins ({})", detail.join(" ")))?;
    within(elapsed, Duration::from_secs(120))?;
    Ok(format!("{wins}/5 seeds, entropy dup/naive {}, {elapsed:.1?}", detail.join(" ")))
}

fn run_heavy_sequence(rng: &mut ChaCha8Rng, len: usize, max: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let run = match rng.random_range(0..10) {
            0 => max as usize,
            1 => max as usize + 1,
            2 => rng.random_range(1..=3 * max as usize),
            3..=5 => 1,
            _ => rng.random_range(2..max as usize),
        };
        let sound = if rng.random_bool(0.3) {
            rng.random_range(0..4)
        } else {
            rng.random_range(0..2048)
        };
        out.extend(std::iter::repeat_n(sound, run.min(len - out.len())));
    }
    out
}

fn criterion_5() -> Outcome {
    let codec = DurationCodec::default();
    let max = codec.max_duration();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = 0;
    let mut saw = (false, false);
    for i in 0..10_000 {
        let len = match i {
            0 => 0,
            1 => max as usize,
            2 => max as usize + 1,
            _ => rng.random_range(0..=2000),
        };
        let seq = if i == 1 || i == 2 {
            vec![9; len]
        } else {
            run_heavy_sequence(&mut rng, len, max)
        };
        let stream = codec.compress(&seq).unwrap();
        saw.0 |= stream.groups.iter().any(|g| g.run == max);
        saw.1 |= seq.windows(max as usize + 1).any(|w| w.iter().all(|&s| s == w[0]));
        let back = codec.decompress(&stream).unwrap();
        if back != seq || !codec.is_canonical(&stream) {
            failures += 1;
        }
    }
    ensure(failures == 0, || format!("{failures} failures"))?;
    ensure(saw.0 && saw.1, || "runs of D_max / D_max+1 not exercised".into())?;
    Ok("10000 sequences, 0 failures".into())
}

fn random_stream(rng: &mut ChaCha8Rng, codec: &DurationCodec) -> TokenStream {
    let len = rng.random_range(0..300);
    let seq = run_heavy_sequence(rng, len, codec.max_duration());
    codec.compress(&seq).unwrap()
}

const MUTATION_ALPHABET: &[char] = &[
    '<', '>', '|', '_', '0', '1', '5', '9', 'a', 's', 'd', 'x', ' ', 'é', '\n', '0',
];

fn criterion_6() -> Outcome {
    let spec = VocabSpec::default();
    let codec = spec.codec();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    let mut samples = Vec::new();
    for _ in 0..10_000 {
        let stream = random_stream(&mut rng, &codec);
        let wrap = rng.random_bool(0.5);
        let text = spec.render(&stream, wrap).unwrap();
        match spec.parse(&text) {
            Ok(p) if p.stream == stream && p.wrapped == wrap => {}
            _ => mismatches += 1,
        }
        if samples.len() < 1000 && !stream.is_empty() {
            samples.push(text);
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} round-trip mismatches"))?;

    let (mut reparsed, mut rejected, mut crashes, mut bad) = (0, 0, 0, 0);
    let prev = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    for text in &samples {
        let mut chars: Vec<char> = text.chars().collect();
        let pos = rng.random_range(0..chars.len());
        let c = MUTATION_ALPHABET[rng.random_range(0..MUTATION_ALPHABET.len())];
        match rng.random_range(0..3) {
            0 => chars[pos] = c,
            1 => chars.insert(pos, c),
            _ => {
                chars.remove(pos);
            }
        }
        let mutated: String = chars.into_iter().collect();
        match panic::catch_unwind(AssertUnwindSafe(|| spec.parse(&mutated))) {
            Err(_) => crashes += 1,
            Ok(Ok(p)) => {
                let valid = codec.validate(&p.stream).is_ok()
                    && spec
                        .render(&p.stream, p.wrapped)
                        .ok()
                        .and_then(|t| spec.parse(&t).ok())
                        .is_some_and(|q| q.stream == p.stream);
                if valid {
                    reparsed += 1;
                } else {
                    bad += 1;
                }
            }
            Ok(Err(e)) => {
                if e.offset <= mutated.len() {
                    rejected += 1;
                } else {
                    bad += 1;
                }
            }
        }
    }
    panic::set_hook(prev);
    ensure(crashes == 0 && bad == 0, || format!("{crashes} crashes, {bad} invalid results"))?;
    Ok(format!(
        "10000 round-trips; 1000 mutations: {reparsed} re-parsed, {rejected} rejected with position"
    ))
}

/// Mapper trained on 500 clean oracle sentences plus 200 held-out ones.
struct MapperFixture {
    oracle: OracleConfig,
    q: Quantizer,
    model: MapperModel,
    held_out: Vec<String>,
    train_time: Duration,
}

fn mapper_fixture() -> MapperFixture {
    let start = Instant::now();
    let oracle = OracleConfig::default();
    let codec = DurationCodec::default();
    let sentences = synthetic_sentences(700, 77);
    let (train, held_out) = sentences.split_at(500);
    let mut speech = FeatureSeq::empty(oracle.dim).unwrap();
    for s in train {
        speech.extend(&text2sem::speak(s, &oracle).unwrap()).unwrap();
    }
    let q = rvq::train_quantizer(
        &speech,
        &TrainConfig {
            levels: 2,
            codebook_size: 64,
            seed: 3,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let pairs: Vec<(String, TokenStream)> = train
        .iter()
        .map(|s| (s.clone(), text2sem::speech_path(s, &oracle, &q, &codec).unwrap()))
        .collect();
    let model = MapperModel::train(&pairs, &oracle.alphabet).unwrap();
    MapperFixture {
        oracle,
        q,
        model,
        held_out: held_out.to_vec(),
        train_time: start.elapsed(),
    }
}

fn criterion_7(fx: &MapperFixture) -> Outcome {
    let start = Instant::now();
    let codec = DurationCodec::default();
    let exact = fx
        .held_out
        .iter()
        .filter(|s| {
            let text = fx.model.translate(s, &codec).unwrap();
            let speech = text2sem::speech_path(s, &fx.oracle, &fx.q, &codec).unwrap();
            eval::ter(&speech, &text).unwrap().distance() == 0
        })
        .count();
    let elapsed = fx.train_time + start.elapsed();
    let share = exact as f64 / fx.held_out.len() as f64;
    ensure(share >= 0.99, || format!("only {exact}/200 exact"))?;
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!("{exact}/200 sentences with TER 0, {elapsed:.1?}"))
}

fn criterion_8(fx: &MapperFixture) -> Outcome {
    let codec = DurationCodec::default();
    let noisy = fx.oracle.with_noise(0.5);
    let (mut speech_ter, mut text_ter) = (0.0, 0.0);
    for s in &fx.held_out {
        let clean = text2sem::speech_path(s, &fx.oracle, &fx.q, &codec).unwrap();
        let heard = text2sem::speech_path(s, &noisy, &fx.q, &codec).unwrap();
        let text = fx.model.translate(s, &codec).unwrap();
        speech_ter += eval::ter(&clean, &heard).unwrap().rate;
        text_ter += eval::ter(&clean, &text).unwrap().rate;
    }
    let n = fx.held_out.len() as f64;
    let (speech_ter, text_ter) = (speech_ter / n, text_ter / n);
    ensure(speech_ter > 5.0 * text_ter, || {
        format!("speech path {speech_ter:.4} vs text path {text_ter:.4}")
    })?;
    Ok(format!("mean TER speech path {speech_ter:.4}, text path {text_ter:.4}"))
}

/// Textbook Levenshtein distance.
fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

fn random_unicode(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(0..40);
    (0..len)
        .map(|_| match rng.random_range(0..4) {
            0 => [' ', '\t', '\n', '\u{a0}', '\u{3000}'][rng.random_range(0..5)],
            1 => rng.random_range(b'!'..=b'~') as char,
            2 => char::from_u32(rng.random_range(0x80..0x3000)).unwrap_or('x'),
            _ => loop {
                if let Some(c) = char::from_u32(rng.random_range(0..0x110000)) {
                    break c;
                }
            },
        })
        .collect()
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let words = ["a", "the", "cat", "sat", "on", "mat", "dog"];
    let mut disagreements = 0;
    for _ in 0..1000 {
        let r: Vec<&str> = (0..rng.random_range(1..=20)).map(|_| words[rng.random_range(0..7)]).collect();
        let h: Vec<&str> = (0..rng.random_range(0..=20)).map(|_| words[rng.random_range(0..7)]).collect();
        let rep = eval::wer(&r.join(" "), &h.join(" ")).unwrap();
        let d = levenshtein(&r, &h);
        disagreements += usize::from(rep.distance() != d || rep.rate != d as f64 / r.len() as f64);

        let rc: Vec<char> = (0..rng.random_range(1..=20)).map(|_| rng.random_range(b'a'..=b'd') as char).collect();
        let hc: Vec<char> = (0..rng.random_range(0..=20)).map(|_| rng.random_range(b'a'..=b'd') as char).collect();
        let rs: String = rc.iter().collect();
        let hs: String = hc.iter().collect();
        let rep = eval::cer(&rs, &hs).unwrap();
        let d = levenshtein(&rc, &hc);
        disagreements += usize::from(rep.distance() != d || rep.rate != d as f64 / rc.len() as f64);

        let mk = |rng: &mut ChaCha8Rng, min: usize| {
            let mut groups = Vec::new();
            let target = rng.random_range(min..=20);
            let mut n = 0;
            while n < target {
                let run = rng.random_range(1..=(target - n).min(4)) as u32;
                groups.push(Group::new(rng.random_range(0..3), run));
                n += run as usize;
            }
            TokenStream::new(groups)
        };
        let rt = mk(&mut rng, 1);
        let ht = mk(&mut rng, 0);
        let rep = eval::ter(&rt, &ht).unwrap();
        let (re, he) = (rt.expand(), ht.expand());
        let d = levenshtein(&re, &he);
        disagreements += usize::from(rep.distance() != d || rep.rate != d as f64 / re.len() as f64);
    }
    ensure(disagreements == 0, || format!("{disagreements} disagreements"))?;
    let non_idempotent = (0..10_000)
        .filter(|_| {
            let s = random_unicode(&mut rng);
            let once = normalize(&s);
            normalize(&once) != once
        })
        .count();
    ensure(non_idempotent == 0, || format!("normalize not idempotent on {non_idempotent} strings"))?;
    Ok("3000 metric pairs agree; normalize idempotent on 10000 strings".into())
}

fn synthetic_records(n: usize, seed: u64) -> Vec<DatasetRecord> {
    let sentences = synthetic_sentences(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sentences
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let prompt = match rng.random_range(0..10) {
                0 => format!("{s} = x^2 + y_1"),
                1 => format!("{s} ?!?!?!?!?!?!?!?!?!?!?!?!?!?!?!?!?!?!?!"),
                2 => format!("{s} café"),
                3 => "  ".to_string(),
                4 => s.repeat(20),
                5 => {
                    let mut c = s.chars();
                    let first = c.next().unwrap().to_uppercase().collect::<String>();
                    format!("{first}{}, please!", c.as_str())
                }
                _ => s,
            };
            let mut r = DatasetRecord::new(format!("rec{i:05}"), prompt, format!("reply {i}"));
            r.lang = "en".into();
            r
        })
        .collect()
}

fn serialize(out: &orchestrator::JobOutput) -> Vec<u8> {
    let mut buf = Vec::new();
    pipeline::write_dataset(&mut buf, &out.accepted).unwrap();
    pipeline::write_reject_log(&mut buf, &out.rejects).unwrap();
    buf
}

fn criterion_10(fx: &MapperFixture) -> Outcome {
    let records = synthetic_records(5000, 10);
    let res = JobResources {
        model: fx.model.clone(),
        vocab: VocabSpec::default(),
        filter: FilterConfig::default(),
    };
    let base_cfg = JobConfig {
        batch_size: 64,
        ..JobConfig::default()
    };
    let mut reference: Option<Vec<u8>> = None;
    let mut reports = Vec::new();
    for (workers, rate) in [(1, 0.0), (4, 0.0), (16, 0.0), (1, 0.1), (4, 0.1), (16, 0.1)] {
        let cfg = JobConfig {
            workers,
            failure_injection_rate: rate,
            seed: 2024,
            ..base_cfg.clone()
        };
        let out = orchestrator::run_records(&records, &res, &cfg).map_err(|e| format!("W={workers} rate={rate}: {e}"))?;
        let r = &out.report;
        ensure(
            r.processed == records.len() && r.processed == r.accepted + r.rejected && r.failed == 0,
            || format!("W={workers} rate={rate}: counts do not reconcile: {r:?}"),
        )?;
        ensure(r.accepted == out.accepted.len() && r.rejected == out.rejects.len(), || {
            format!("W={workers}: report disagrees with output")
        })?;
        let bytes = serialize(&out);
        match &reference {
            None => reference = Some(bytes),
            Some(b) => ensure(*b == bytes, || format!("W={workers} rate={rate}: output differs"))?,
        }
        reports.push((workers, rate, r.retried));
    }
    let retried: usize = reports.iter().filter(|r| r.1 > 0.0).map(|r| r.2).sum();
    ensure(retried > 0, || "failure injection never fired".into())?;
    Ok(format!(
        "5000 records identical for W=1,4,16 with and without 10% failures ({retried} retries total)"
    ))
}

fn criterion_11(fx: &MapperFixture) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("in.jsonl");
    let records = synthetic_records(1500, 11);
    let mut buf = Vec::new();
    pipeline::write_dataset(&mut buf, &records).unwrap();
    std::fs::write(&input, buf).unwrap();
    let mapper = dir.path().join("mapper.txt");
    fx.model.save(&mapper).unwrap();
    let spec = JobSpec {
        inputs: vec![input],
        output: dir.path().join("out.jsonl"),
        rejects: None,
        mapper,
        vocab: None,
        filter: FilterConfig::default(),
        config: JobConfig {
            workers: 4,
            batch_size: 50,
            ..JobConfig::default()
        },
    };
    let report = orchestrator::run_job(&spec).map_err(|e| e.to_string())?;
    let vocab = VocabSpec::default();
    let codec = vocab.codec();
    let out = pipeline::read_dataset(BufReader::new(std::fs::File::open(&spec.output).unwrap())).unwrap();
    let rejects =
        pipeline::read_reject_log(BufReader::new(std::fs::File::open(spec.rejects_path()).unwrap())).unwrap();
    let by_id: HashMap<&str, &DatasetRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut bad = 0;
    for r in &out {
        let markup = r.user_turn_markup.as_deref().unwrap_or("");
        let Some(body) = markup.strip_prefix(TASK_TOKEN) else {
            bad += 1;
            continue;
        };
        let parsed = vocab.parse(body).map_err(|e| format!("{}: {e}", r.id))?;
        let original = by_id[r.id.as_str()];
        let expected = fx.model.translate(&normalize(&original.prompt), &codec).unwrap();
        let ok = parsed.wrapped
            && codec.decompress(&parsed.stream).unwrap() == codec.decompress(&expected).unwrap()
            && r.response == original.response;
        bad += usize::from(!ok);
    }
    ensure(bad == 0, || format!("{bad} records do not reproduce translate(normalize(prompt))"))?;
    let accepted: BTreeSet<&str> = out.iter().map(|r| r.id.as_str()).collect();
    let rejected: BTreeSet<&str> = rejects.iter().map(|e| e.id.as_str()).collect();
    let all: BTreeSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    ensure(accepted.is_disjoint(&rejected), || "id both accepted and rejected".into())?;
    ensure(accepted.union(&rejected).copied().collect::<BTreeSet<_>>() == all, || {
        "some ids missing from both outputs".into()
    })?;
    ensure(rejects.iter().all(|e| RejectReason::ALL.contains(&e.reason)), || {
        "invalid reason code".into()
    })?;
    let reasons: BTreeSet<RejectReason> = rejects.iter().map(|e| e.reason).collect();
    ensure(reasons.len() == RejectReason::ALL.len(), || format!("reasons seen: {reasons:?}"))?;
    ensure(report.processed == records.len(), || format!("report {report:?}"))?;
    Ok(format!(
        "{} accepted records reproduce exactly; {} rejects, all reason codes valid",
        out.len(),
        rejects.len()
    ))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn guarded_pair(f: fn() -> (Outcome, Outcome)) -> (Outcome, Outcome) {
    let mut second = Err("not run".to_string());
    let first = guarded(|| {
        let (a, b) = f();
        second = b;
        a
    });
    if first.is_err() && second.is_err() {
        second = first.clone();
    }
    (first, second)
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut record = |n, name, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = guarded(f);
        let elapsed = start.elapsed();
        let line = match &o {
            Ok(d) => format!("criterion {n:>2} PASS  {name}: {d}"),
            Err(e) => format!("criterion {n:>2} FAIL  {name}: {e}"),
        };
        println!("{line}  [{elapsed:.2?}]");
        results.push((n, name, o, elapsed));
    };

    let (c1, c2) = guarded_pair(criterion_1_and_2);
    record(1, "rvq oracle equivalence", &mut || c1.clone());
    record(2, "residual monotonicity", &mut || c2.clone());

    let fixture = expansion_fixture(0, 10_000);
    record(3, "expansion contract", &mut || criterion_3(&fixture));
    record(4, "utilization after expansion", &mut || criterion_4(&fixture));
    record(5, "duration codec losslessness", &mut criterion_5);
    record(6, "markup round-trip and rejection", &mut criterion_6);

    let mapper = mapper_fixture();
    record(7, "text/speech path alignment", &mut || criterion_7(&mapper));
    record(8, "noise robustness", &mut || criterion_8(&mapper));
    record(9, "metric oracle", &mut criterion_9);
    record(10, "orchestrator determinism", &mut || criterion_10(&mapper));
    record(11, "end-to-end dataset integrity", &mut || criterion_11(&mapper));

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed",
        results.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
