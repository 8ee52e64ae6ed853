use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semtok::rvq::read_features;
use semtok::text2sem::synthetic_sentences;

fn semtok(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semtok"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn semtok")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = semtok(dir, args);
    assert!(
        out.status.success(),
        "semtok {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

struct Fixture {
    _tmp: tempfile::TempDir,
    dir: PathBuf,
}

/// Sentences, oracle features, a small quantizer and a mapper.
fn fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    let sentences = synthetic_sentences(60, 3);
    fs::write(dir.join("text.txt"), sentences.join("\n") + "\n").unwrap();
    ok(&dir, &["synth", "--in", "text.txt", "--out", "feats.bin", "--dim", "16"]);
    ok(
        &dir,
        &[
            "train-quantizer", "--in", "feats.bin", "--out", "q.bin", "--levels", "2",
            "--codebook-size", "32", "--seed", "5",
        ],
    );
    ok(&dir, &["train-mapper", "--in", "text.txt", "--quantizer", "q.bin", "--out", "mapper.txt"]);
    Fixture { _tmp: tmp, dir }
}

#[test]
fn encode_decode_residuals_match_report() {
    let fx = fixture();
    let dir = &fx.dir;
    ok(dir, &["encode", "--quantizer", "q.bin", "--in", "feats.bin", "--out", "tokens.txt"]);
    ok(dir, &["decode", "--quantizer", "q.bin", "--in", "tokens.txt", "--out", "recon.bin"]);
    let x = read_features(dir.join("feats.bin")).unwrap();
    let y = read_features(dir.join("recon.bin")).unwrap();
    assert_eq!(x.len(), y.len());
    let report = fs::read_to_string(dir.join("tokens.txt.residuals")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), x.len());
    for (t, line) in lines.iter().enumerate() {
        let norms: Vec<f64> = line.split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(norms.len(), 3);
        let direct: f64 = x
            .frame(t)
            .iter()
            .zip(y.frame(t))
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        let reported = *norms.last().unwrap();
        assert!((direct - reported).abs() < 1e-5, "frame {t}: {direct} vs {reported}");
    }
}

#[test]
fn eval_identical_files_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("ref.txt"), "Hello world\nthe cat sat\n").unwrap();
    let out = ok(dir, &["eval-wer", "--ref", "ref.txt", "--hyp", "ref.txt"]);
    assert!(out.contains("rate=0.000000"), "{out}");
    let out = ok(dir, &["eval-cer", "--ref", "ref.txt", "--hyp", "ref.txt", "--out", "cer.txt"]);
    assert!(out.contains("rate=0.000000"));
    assert_eq!(fs::read_to_string(dir.join("cer.txt")).unwrap(), out);
    fs::write(dir.join("hyp.txt"), "hello word\nthe cat sat\n").unwrap();
    let out = ok(dir, &["eval-wer", "--ref", "ref.txt", "--hyp", "hyp.txt"]);
    assert!(out.contains("S=1 I=0 D=0 N=5 rate=0.200000"), "{out}");
}

#[test]
fn translate_and_ter() {
    let fx = fixture();
    let dir = &fx.dir;
    ok(dir, &["translate", "--mapper", "mapper.txt", "--in", "text.txt", "--out", "markup.txt"]);
    let markup = fs::read_to_string(dir.join("markup.txt")).unwrap();
    assert_eq!(markup.lines().count(), 60);
    assert!(markup.lines().all(|l| l.starts_with("<|sound_start|>") && l.ends_with("<|sound_end|>")));
    let out = ok(dir, &["eval-ter", "--ref", "markup.txt", "--hyp", "markup.txt"]);
    assert!(out.contains("ter: pairs=60") && out.contains("rate=0.000000"), "{out}");
}

fn write_dataset(dir: &Path) {
    let prompts = [
        "Tell me a story about the sea",
        "what is $x^2$ when x is three",
        "How do birds fly?",
        "??!!..",
        "Résumé writing tips please",
        "",
        "give me ideas for dinner",
    ];
    let mut text = String::new();
    for i in 0..140 {
        let p = prompts[i % prompts.len()];
        text.push_str(&format!(
            "{{\"id\":\"r{i:03}\",\"prompt\":{p:?},\"response\":\"ok {i}\",\"lang\":\"en\",\"source\":\"unit\"}}\n"
        ));
    }
    fs::write(dir.join("data.jsonl"), text).unwrap();
}

#[test]
fn gen_dataset_is_deterministic() {
    let fx = fixture();
    let dir = &fx.dir;
    write_dataset(dir);
    let base = [
        "gen-dataset", "--in", "data.jsonl", "--mapper", "mapper.txt", "--batch-size", "9",
    ];
    let run = |out: &str, extra: &[&str]| {
        let mut args: Vec<&str> = base.to_vec();
        args.extend_from_slice(&["--out", out]);
        args.extend_from_slice(extra);
        ok(dir, &args)
    };
    let summary = run("a.jsonl", &[]);
    assert!(summary.contains("processed=140"), "{summary}");
    run("b.jsonl", &[]);
    run("c.jsonl", &["--workers", "4", "--failure-injection-rate", "0.1", "--max-retries", "8"]);
    let a = fs::read(dir.join("a.jsonl")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, fs::read(dir.join("b.jsonl")).unwrap());
    assert_eq!(a, fs::read(dir.join("c.jsonl")).unwrap());
    let rejects = fs::read_to_string(dir.join("a.jsonl.rejects")).unwrap();
    assert_eq!(rejects, fs::read_to_string(dir.join("c.jsonl.rejects")).unwrap());
    assert!(rejects.contains("r001\tmath_content"));
    assert!(rejects.contains("r003\texcessive_punctuation"));
    assert!(rejects.contains("r004\tout_of_alphabet"));
    assert!(rejects.contains("r005\ttoo_short"));
    assert!(fs::read_to_string(dir.join("a.jsonl.report")).unwrap().contains("failed=0"));

    let stats = ok(dir, &["stats", "--in", "a.jsonl"]);
    assert!(stats.starts_with("records=140 accepted=60 rejected=80"), "{stats}");
}

#[test]
fn config_file_is_merged_and_checked() {
    let fx = fixture();
    let dir = &fx.dir;
    write_dataset(dir);
    fs::write(dir.join("good.toml"), "mapper = \"mapper.txt\"\nworkers = 3\nbatch_size = 5\n").unwrap();
    let out = ok(dir, &["--config", "good.toml", "gen-dataset", "--in", "data.jsonl", "--out", "d.jsonl"]);
    assert!(out.contains("batches=28"), "{out}");
    assert!(out.contains("worker_batches=") && out.matches(',').count() >= 2);

    fs::write(dir.join("bad.toml"), "workerz = 3\n").unwrap();
    let res = semtok(dir, &["--config", "bad.toml", "gen-dataset", "--in", "data.jsonl", "--out", "e.jsonl"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("workerz"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(semtok(dir, &["--help"]).status.code(), Some(0));
    assert_eq!(semtok(dir, &["--version"]).status.code(), Some(0));
    assert_eq!(semtok(dir, &["encode", "--help"]).status.code(), Some(0));
    assert_eq!(semtok(dir, &[]).status.code(), Some(1));
    assert_eq!(semtok(dir, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(semtok(dir, &["eval-wer", "--ref", "a"]).status.code(), Some(1));
    assert_eq!(
        semtok(dir, &["train-quantizer", "--in", "x", "--out", "y", "--codebook-size", "1"]).status.code(),
        Some(1)
    );

    let missing = semtok(dir, &["eval-wer", "--ref", "nope.txt", "--hyp", "nope.txt"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.txt"));

    fs::write(dir.join("r.txt"), "a b\nc\n").unwrap();
    fs::write(dir.join("h.txt"), "a b\n").unwrap();
    assert_eq!(semtok(dir, &["eval-wer", "--ref", "r.txt", "--hyp", "h.txt"]).status.code(), Some(2));

    fs::write(dir.join("m.txt"), "<|sound_start|><|duration_02|><|sound_end|>\n").unwrap();
    let bad = semtok(dir, &["eval-ter", "--ref", "m.txt", "--hyp", "m.txt"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("m.txt:1"));
}
