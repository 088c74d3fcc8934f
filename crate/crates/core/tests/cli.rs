//! The command-line binary, driven as a subprocess.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

/// Run the binary with a whitespace-separated argument line.
fn bin(line: &str, cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ensemble-ssl"))
        .args(line.split_whitespace())
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn ensemble-ssl")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn gen_writes_requested_line_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin("gen --n 2000 --langs 4 --seed 7 --out c.jsonl", dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("c.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2000);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(first["id"].is_string() && first["label"].is_u64() && first["lang"].is_string());
}

#[test]
fn pipeline_produces_declared_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = |line: &str| {
        let out = bin(line, d);
        assert_eq!(out.status.code(), Some(0), "{line}: {}", stderr(&out));
        out
    };
    ok("gen --n 400 --signal-vocab 40 --seed 2 --out c.jsonl --resources-out res");
    ok("preprocess --corpus c.jsonl --resources res --out p.jsonl");
    let clean = fs::read_to_string(d.join("p.jsonl")).unwrap();
    assert_eq!(clean.lines().count(), 400);
    for line in clean.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        // only signal words survive; filler words are stopwords
        assert!(v["text"]
            .as_str()
            .unwrap()
            .split(' ')
            .all(|w| w.contains('c')));
    }

    ok("split --corpus c.jsonl --seed 2 --out s.json");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    assert_eq!(manifest["labeled"].as_array().unwrap().len(), 80);

    fs::write(
        d.join("cfg.txt"),
        "lr = 2\nbeta_cons = 0.25\nresources = res\n",
    )
    .unwrap();
    ok("train --config cfg.txt --set epochs=4 --set warmup_epochs=1 --seed 5 --corpus c.jsonl --splits s.json --out run");
    for file in [
        "metrics.csv",
        "pool_log.csv",
        "student.ckpt",
        "teacher0.ckpt",
        "teacher2.ckpt",
        "vocab.txt",
        "pseudo_labels.jsonl",
        "config.txt",
    ] {
        assert!(d.join("run").join(file).is_file(), "missing {file}");
    }
    let metrics = fs::read_to_string(d.join("run/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2 * 4);
    assert!(metrics
        .starts_with("epoch,split,acc,precision,recall,f1,tau,human,pseudo,unlabeled,mean_weight"));
    let saved = fs::read_to_string(d.join("run/config.txt")).unwrap();
    assert!(saved.contains("seed = 5") && saved.contains("epochs = 4"));

    let out = ok("eval --run run --corpus c.jsonl --splits s.json");
    let report = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = report.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "80");
    let f1: f64 = row[4].parse().unwrap();
    let logged: f64 = metrics
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(5)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(f1, logged);

    ok("pseudo-dump --run run --corpus c.jsonl --splits s.json --tau 0.5 --out dump/pl.jsonl");
    let dump = fs::read_to_string(d.join("dump/pl.jsonl")).unwrap();
    for line in dump.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["confidence"].as_f64().unwrap() >= 0.5);
    }

    ok("ablate --config cfg.txt --set epochs=2 --set warmup_epochs=1 --corpus c.jsonl --splits s.json --seeds 1,2 --out ablation.csv");
    let table = fs::read_to_string(d.join("ablation.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 5 * 2 + 5);
}

#[test]
fn missing_corpus_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(
        "train --corpus absent.jsonl --splits s.json --out run",
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage:"), "{}", stderr(&out));

    let out = bin("train --splits s.json --out run", dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--corpus"));
}

#[test]
fn unknown_flag_and_key_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin("gen --out c.jsonl --bogus", dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage:"));

    let out = bin("frobnicate", dir.path());
    assert_eq!(out.status.code(), Some(1));

    bin("gen --n 50 --out c.jsonl", dir.path());
    bin("split --corpus c.jsonl --out s.json", dir.path());
    let out = bin(
        "train --set learning_rate=1 --corpus c.jsonl --splits s.json --out run",
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("learning_rate"));
}

#[test]
fn malformed_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.jsonl"), "{\"id\": \"a\", \"text\": \n").unwrap();
    let out = bin("split --corpus c.jsonl --out s.json", dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("c.jsonl"), "{}", stderr(&out));
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin("--help", dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in [
        "gen",
        "preprocess",
        "split",
        "train",
        "eval",
        "ablate",
        "pseudo-dump",
    ] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
}
