use std::fs;
use std::path::{Path, PathBuf};

use monoforge::clean::clean_documents;
use monoforge::pipeline::{read_raw, run_pipeline, PipelineConfig, RunOptions};
use monoforge::{load_manifest, LanguageTag};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini")
}

fn config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixture_dir().join("pipeline.toml")).unwrap();
    cfg.run.out_dir = out.to_path_buf();
    cfg
}

#[test]
fn clean_only_run_matches_direct_call() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.run.until = Some("clean".into());
    let report = run_pipeline(&cfg, &RunOptions::default()).unwrap();
    assert!(report.completed);
    assert_eq!(report.stages.len(), 1);

    let en = LanguageTag::new("en").unwrap();
    let hi = LanguageTag::new("hi").unwrap();
    let (m_en, s_en) = clean_documents(&en, &read_raw(&cfg.inputs.src[0]).unwrap());
    let (m_hi, s_hi) = clean_documents(&hi, &read_raw(&cfg.inputs.tgt[0]).unwrap());
    let c = &report.stages[0];
    assert_eq!(c.docs_in, (s_en.docs_in + s_hi.docs_in) as u64);
    assert_eq!(c.docs_out, (m_en.len() + m_hi.len()) as u64);
    assert_eq!(c.drops["duplicate_url"], (s_en.duplicate_urls + s_hi.duplicate_urls) as u64);
    assert!(c.balanced());
    let saved = load_manifest(&dir.path().join("manifests/en.0.clean.jsonl")).unwrap();
    assert_eq!(saved, m_en);
}

#[test]
fn resume_refuses_changed_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.run.until = Some("clean".into());
    run_pipeline(&cfg, &RunOptions::default()).unwrap();
    cfg.run.seed += 1;
    let opts = RunOptions {
        resume: true,
        ..Default::default()
    };
    let err = run_pipeline(&cfg, &opts).unwrap_err();
    assert!(matches!(err, monoforge::Error::Config(_)), "{err}");
}

#[test]
fn stage_failure_names_the_stage_and_keeps_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    // Far more vocabulary than the fixture can supply.
    cfg.tokenizer.vocab_size = 100_000;
    let err = run_pipeline(&cfg, &RunOptions::default()).unwrap_err();
    match err {
        monoforge::Error::Stage { stage, .. } => assert_eq!(stage, "tokenizer"),
        other => panic!("unexpected {other}"),
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("run_report.json")).unwrap()).unwrap();
    assert_eq!(report["failed_stage"], "tokenizer");
    assert_eq!(report["stages"].as_array().unwrap().len(), 5);
}

#[test]
fn full_run_emits_balanced_splits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let report = run_pipeline(&cfg, &RunOptions::default()).unwrap();
    assert!(report.completed && report.balanced());
    let names: Vec<&str> = report.splits.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["hi-clean", "syn-hi_en-unfiltered", "syn-hi_en-filtered", "hi-clean+10"]);
    for s in &report.splits {
        assert!(s.tokens >= s.target_tokens, "{s:?}");
        assert!(dir.path().join(format!("splits/{}.jsonl", s.name)).exists());
    }
}
