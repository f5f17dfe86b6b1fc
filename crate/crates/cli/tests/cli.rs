use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/mini").canonicalize().unwrap()
}

/// The fixture config with absolute input paths, written into `dir`, with
/// `edit` applied to its text.
fn config(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let fx = fixture();
    let mut text = fs::read_to_string(fx.join("pipeline.toml")).unwrap();
    for f in ["en.jsonl", "hi.jsonl", "toxic_en.txt"] {
        text = text.replace(&format!("\"{f}\""), &format!("{:?}", fx.join(f)));
    }
    let path = dir.join("pipeline.toml");
    fs::write(&path, edit(text)).unwrap();
    path
}

fn monoforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monoforge"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = monoforge(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dry_run_plans_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), |t| t);
    let plan = json(&["run", s(&cfg), "--dry-run"]);
    assert_eq!(plan["stages"].as_array().unwrap().len(), 12);
    assert_eq!(plan["budget"], 1000);
    assert_eq!(plan["splits"][0]["name"], "hi-clean");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn run_then_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), |t| t);
    let report = json(&["run", s(&cfg)]);
    assert_eq!(report["completed"], true);
    let report_path = dir.path().join("out/run_report.json");
    let first = fs::read(&report_path).unwrap();
    let again = json(&["run", s(&cfg), "--resume"]);
    assert_eq!(again["completed"], true);
    assert_eq!(fs::read(&report_path).unwrap(), first);
}

#[test]
fn seed_override_changes_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), |t| t);
    let a = json(&["run", s(&cfg), "--dry-run"]);
    let b = json(&["run", s(&cfg), "--dry-run", "--seed", "8"]);
    assert_ne!(a["config_hash"], b["config_hash"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = config(dir.path(), |t| t.replace("e = 64", "e = 65"));
    assert_eq!(monoforge(&["run", s(&bad)]).status.code(), Some(2));
    assert_eq!(monoforge(&["run", s(&bad), "--dry-run"]).status.code(), Some(2));
    assert_eq!(monoforge(&["frobnicate"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let failing = config(dir.path(), |t| t.replace("vocab_size = 600", "vocab_size = 100000"));
    let out = monoforge(&["run", s(&failing)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tokenizer"));
    let report: Value = serde_json::from_slice(&fs::read(dir.path().join("out/run_report.json")).unwrap()).unwrap();
    assert_eq!(report["failed_stage"], "tokenizer");

    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), |t| t);
    ok(&["run", s(&cfg), "--until", "clean"]);
    let changed = config(dir.path(), |t| t.replace("seed = 7", "seed = 9"));
    assert_eq!(monoforge(&["run", s(&changed), "--resume"]).status.code(), Some(2));
}

#[test]
fn stages_chain_by_hand() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let fx = fixture();
    let c = json(&["clean", "--lang", "hi", "--input", s(&fx.join("hi.jsonl")), "--out", s(&d("hi.clean.jsonl"))]);
    assert_eq!(c["docs_in"], 71);
    json(&["clean", "--lang", "en", "--input", s(&fx.join("en.jsonl")), "--out", s(&d("en.clean.jsonl"))]);

    json(&[
        "lid",
        "train",
        "--sample",
        &format!("en={}", s(&d("en.clean.jsonl"))),
        "--sample",
        &format!("hi={}", s(&d("hi.clean.jsonl"))),
        "--out",
        s(&d("lid.json")),
    ]);
    for l in ["en", "hi"] {
        let lid = json(&[
            "lid",
            "filter",
            "--model",
            s(&d("lid.json")),
            "--input",
            s(&d(&format!("{l}.clean.jsonl"))),
            "--out",
            s(&d(&format!("{l}.lid.jsonl"))),
        ]);
        assert_eq!(lid["dropped"], 1, "{l}");
    }
    let tox = json(&[
        "toxicity",
        "--words",
        s(&fx.join("toxic_en.txt")),
        "--input",
        s(&d("en.lid.jsonl")),
        "--out",
        s(&d("en.toxicity.jsonl")),
    ]);
    assert_eq!(tox["dropped"], 1);
    fs::copy(d("hi.lid.jsonl"), d("hi.toxicity.jsonl")).unwrap();

    for l in ["en", "hi"] {
        let ledger = d(&format!("{l}.ledger.json"));
        let args = |out: &str| {
            vec![
                "dedup".to_string(),
                "--input".into(),
                s(&d(&format!("{l}.toxicity.jsonl"))).into(),
                "--out".into(),
                s(&d(out)).into(),
                "--ledger".into(),
                s(&ledger).into(),
            ]
        };
        let first: Vec<String> = args(&format!("{l}.dedup.jsonl"));
        json(&first.iter().map(String::as_str).collect::<Vec<_>>());
        // A second pass against the persisted ledger finds everything seen.
        let second: Vec<String> = args(&format!("{l}.dedup2.jsonl"));
        let again = json(&second.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(again["kept"], 0, "{l}");
        json(&["merge", "--input", s(&d(&format!("{l}.dedup.jsonl"))), "--out", s(&d(&format!("{l}.merged.jsonl")))]);
    }

    let tok = d("tok.json");
    json(&[
        "tokenizer",
        "train",
        "--input",
        s(&d("en.merged.jsonl")),
        "--input",
        s(&d("hi.merged.jsonl")),
        "--vocab-size",
        "600",
        "--sentences-per-lang",
        "300",
        "--weight",
        "hi=2",
        "--out",
        s(&tok),
    ]);
    let ids = ok(&["tokenizer", "encode", "--model", s(&tok), "नमस्ते, world ✓"]);
    let ids: Vec<&str> = ids.split_whitespace().collect();
    let mut args = vec!["tokenizer", "decode", "--model", s(&tok), "--"];
    args.extend(ids);
    assert_eq!(ok(&args).trim_end(), "नमस्ते, world ✓");

    let ckpt = d("lm.ckpt");
    let trained = json(&[
        "lm",
        "train",
        "--tokenizer",
        s(&tok),
        "--input",
        s(&d("hi.merged.jsonl")),
        "--n-embed",
        "16",
        "--blocks",
        "1",
        "--heads",
        "2",
        "--context",
        "64",
        "--lr",
        "0.003",
        "--warmup-steps",
        "5",
        "--batch-size",
        "4",
        "--grad-accum",
        "1",
        "--max-steps",
        "20",
        "--out",
        s(&ckpt),
        "--curve",
        s(&d("curve.csv")),
    ]);
    assert_eq!(trained["steps"], 20);
    assert!(trained["final_loss"].as_f64().unwrap() < trained["initial_loss"].as_f64().unwrap());
    ok(&["lm", "generate", "--checkpoint", s(&ckpt), "--tokenizer", s(&tok), "--max-new", "5", "किसान"]);
    let trace = ok(&["lm", "trace", "--checkpoint", s(&ckpt), "--tokenizer", s(&tok), "किसान बाज़ार"]);
    assert!(trace.starts_with("position,token,nll\n2,"));

    let tr = json(&[
        "translate",
        "--backend",
        "identity",
        "--src",
        "en",
        "--tgt",
        "hi",
        "--batch",
        "16",
        "--tokenizer",
        s(&tok),
        "--input",
        s(&d("en.merged.jsonl")),
        "--out",
        s(&d("hi.synthetic.jsonl")),
    ]);
    assert_eq!(tr["docs_failed"], 0);

    let scored = json(&[
        "filter",
        "score",
        "--checkpoint",
        s(&ckpt),
        "--tokenizer",
        s(&tok),
        "--input",
        s(&d("hi.synthetic.jsonl")),
        "--e",
        "64",
        "--out",
        s(&d("scores.jsonl")),
    ]);
    let threshold = json(&[
        "filter",
        "threshold",
        "--ledger",
        s(&d("scores.jsonl")),
        "--input",
        s(&d("hi.synthetic.jsonl")),
        "--budget",
        "1000",
        "--out",
        s(&d("threshold.json")),
    ]);
    assert!(threshold["kept_tokens"].as_u64().unwrap() >= 1000);
    let applied = json(&[
        "filter",
        "apply",
        "--ledger",
        s(&d("scores.jsonl")),
        "--threshold",
        s(&d("threshold.json")),
        "--input",
        s(&d("hi.synthetic.jsonl")),
        "--out",
        s(&d("hi.filtered.jsonl")),
    ]);
    assert_eq!(applied["kept"], threshold["kept_docs"]);
    assert_eq!(applied["unscorable"], scored["unscorable"]);
    let reports = d("reports");
    json(&[
        "filter",
        "report",
        "--checkpoint",
        s(&ckpt),
        "--tokenizer",
        s(&tok),
        "--kept",
        s(&d("hi.filtered.jsonl")),
        "--dropped",
        s(&d("hi.filtered.dropped.jsonl")),
        "--bucket-size",
        "8",
        "--out-dir",
        s(&reports),
    ]);
    for f in ["position_stats.kept.csv", "length_summary.csv", "length_histogram.csv"] {
        assert!(reports.join(f).exists(), "{f}");
    }

    let b = json(&["budget", "--params", "50", "--manifest", s(&d("hi.filtered.jsonl"))]);
    assert_eq!(b["budget"], 1000);
    assert_eq!(b["feasibility"]["status"], "feasible");
}
