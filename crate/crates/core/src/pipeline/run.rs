//! Stage runner with persisted state for resumption.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tinylm::{init_params, load_checkpoint, save_checkpoint, Checkpoint, TinyLmParams, Trainer};

use super::config::PipelineConfig;
use super::splits::{materialize_splits, plan_splits, SplitPlan, SplitPools};
use crate::budget::token_budget;
use crate::clean::{
    clean_documents, dedup_paragraphs, lid_filter, lid_train, merge_corpora, normalize_bytes, toxicity_filter, DedupLedger,
    LidModel, Partition, RawDocument, ToxicWordList,
};
use crate::corpus::{load_manifest, save_manifest, CorpusManifest, LanguageTag, ProvenanceKind, Stage};
use crate::filter::{
    apply_filter, checkpoint_id, length_report, position_stats, position_stats_csv, score_corpus, select_threshold, FilterThreshold,
    ScoreLedger, Scorer,
};
use crate::tokenizer::{bpe_train, manifest_sentences, sample_sentences, PlanEntry, SamplingPlan, TokenizerModel, BOS, EOS};
use crate::translate::{translate_corpus, MtBackend, Repairer};
use crate::{Error, Result};

/// Stage names in execution order.
pub const STAGES: [&str; 12] = [
    "clean", "lid", "toxicity", "dedup", "merge", "tokenizer", "lm", "translate", "score", "filter", "report", "splits",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCounters {
    pub stage: String,
    pub docs_in: u64,
    pub docs_out: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub drops: BTreeMap<String, u64>,
    /// Stage-specific counts such as retries or repairs.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, u64>,
}

impl StageCounters {
    fn new(stage: &str) -> Self {
        Self {
            stage: stage.into(),
            ..Default::default()
        }
    }

    pub fn dropped(&self) -> u64 {
        self.drops.values().sum()
    }

    /// Every document entering the stage left it kept or dropped.
    pub fn balanced(&self) -> bool {
        self.docs_in == self.docs_out + self.dropped()
    }

    fn add_in(&mut self, m: &CorpusManifest) {
        self.docs_in += m.len() as u64;
        self.tokens_in += m.total_word_tokens();
    }

    fn add_partition(&mut self, p: &Partition) {
        self.docs_out += p.kept.len() as u64;
        self.tokens_out += p.kept.total_word_tokens();
        for d in &p.dropped.documents {
            let r = d.drop_reason.map(|r| r.as_str()).unwrap_or("unspecified");
            *self.drops.entry(r.to_string()).or_default() += 1;
        }
    }

    fn pass_through(&mut self, m: &CorpusManifest) {
        self.add_in(m);
        self.docs_out += m.len() as u64;
        self.tokens_out += m.total_word_tokens();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub name: String,
    pub target_tokens: u64,
    pub tokens: u64,
    pub docs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub budget: u64,
    pub completed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    pub stages: Vec<StageCounters>,
    #[serde(default)]
    pub splits: Vec<SplitSummary>,
    /// Seconds per stage executed in this invocation; kept out of the
    /// report file so identical runs give identical reports.
    #[serde(skip)]
    pub wall_time: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn balanced(&self) -> bool {
        self.stages.iter().all(StageCounters::balanced)
    }

    pub fn stage(&self, name: &str) -> Option<&StageCounters> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunPlan {
    pub config_hash: String,
    pub stages: Vec<String>,
    /// First stage that would run when resuming.
    pub resume_from: Option<String>,
    pub budget: u64,
    pub lm_non_embedding_params: u64,
    pub splits: Vec<SplitPlan>,
}

#[derive(Clone, Default)]
pub struct RunOptions {
    /// Skip stages recorded as complete by an earlier run with the same
    /// config hash.
    pub resume: bool,
    /// Stop cleanly after this stage (used to simulate interruptions).
    pub stop_after: Option<String>,
    /// Replaces the configured MT backend.
    pub backend: Option<Arc<dyn MtBackend>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct RunState {
    config_hash: String,
    completed: Vec<String>,
    counters: Vec<StageCounters>,
    #[serde(default)]
    splits: Vec<SplitSummary>,
}

/// Output file layout under `run.out_dir`.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }
    pub fn manifest(&self, name: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{name}.jsonl"))
    }
    pub fn model(&self, name: &str) -> PathBuf {
        self.root.join("models").join(name)
    }
    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }
    pub fn split(&self, name: &str) -> PathBuf {
        self.root.join("splits").join(format!("{name}.jsonl"))
    }
    pub fn state(&self) -> PathBuf {
        self.root.join("state.json")
    }
    pub fn run_report(&self) -> PathBuf {
        self.root.join("run_report.json")
    }
    fn create(&self) -> Result<()> {
        for d in ["manifests", "models", "reports", "splits", "ledgers"] {
            fs::create_dir_all(self.root.join(d))?;
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn input_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|e| e == "txt"));
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

#[derive(Deserialize)]
struct RawRecord {
    #[serde(default)]
    url: Option<String>,
    text: String,
}

/// Reads a `.jsonl` file of `{url, text}` records or a directory of `.txt`
/// documents (invalid UTF-8 is replaced during cleaning).
pub fn read_raw(path: &Path) -> Result<Vec<RawDocument>> {
    let mut out = Vec::new();
    if path.is_dir() {
        for f in input_files(path)? {
            let text = normalize_bytes(&fs::read(&f)?).text;
            out.push(RawDocument { url: None, text });
        }
        return Ok(out);
    }
    let reader = BufReader::new(fs::File::open(path)?);
    for (i, line) in reader.split(b'\n').enumerate() {
        let line = line?;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let rec: RawRecord = serde_json::from_slice(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(RawDocument {
            url: rec.url,
            text: rec.text,
        });
    }
    Ok(out)
}

/// SHA-256 over the config (excluding the output directory) and the bytes of
/// every input it references.
pub fn config_hash(cfg: &PipelineConfig) -> Result<String> {
    let mut canon = cfg.clone();
    canon.run.out_dir = PathBuf::new();
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&canon)?);
    let mut files: Vec<PathBuf> = Vec::new();
    for p in cfg.inputs.src.iter().chain(&cfg.inputs.tgt) {
        files.extend(input_files(p)?);
    }
    files.extend([&cfg.lid.model, &cfg.toxicity.src_words, &cfg.toxicity.tgt_words].into_iter().flatten().cloned());
    if let Some(t) = cfg.translate.endpoint.strip_prefix("table:") {
        files.push(PathBuf::from(t));
    }
    for f in files {
        let bytes = fs::read(&f)?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// Validates the config and describes what a run would do.
pub fn plan_run(cfg: &PipelineConfig, resume: bool) -> Result<RunPlan> {
    cfg.validate()?;
    let hash = config_hash(cfg)?;
    let stages = active_stages(cfg)?;
    let layout = Layout::new(&cfg.run.out_dir);
    let done = if resume { load_state(&layout, &hash)?.completed } else { Vec::new() };
    Ok(RunPlan {
        resume_from: stages.iter().find(|s| !done.contains(s)).cloned(),
        stages,
        budget: token_budget(&cfg.budget.spec()?),
        lm_non_embedding_params: cfg.lm_config(cfg.tokenizer.vocab_size)?.non_embedding_params(),
        splits: plan_splits(cfg)?,
        config_hash: hash,
    })
}

fn active_stages(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let last = match &cfg.run.until {
        Some(u) => STAGES
            .iter()
            .position(|s| s == u)
            .ok_or_else(|| Error::Config(format!("unknown stage {u:?} in run.until")))?,
        None => STAGES.len() - 1,
    };
    Ok(STAGES[..=last].iter().map(|s| s.to_string()).collect())
}

fn load_state(layout: &Layout, hash: &str) -> Result<RunState> {
    let path = layout.state();
    if !path.exists() {
        return Ok(RunState {
            config_hash: hash.into(),
            ..Default::default()
        });
    }
    let state: RunState = serde_json::from_slice(&fs::read(&path)?)?;
    if state.config_hash != hash {
        return Err(Error::Config(format!(
            "cannot resume: {} was produced by a different config or inputs",
            layout.root.display()
        )));
    }
    Ok(state)
}

/// Runs every configured stage in order, persisting each stage's outputs and
/// the run state before moving on.
pub fn run_pipeline(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let hash = config_hash(cfg)?;
    let stages = active_stages(cfg)?;
    let layout = Layout::new(&cfg.run.out_dir);
    layout.create()?;
    let mut state = if opts.resume {
        load_state(&layout, &hash)?
    } else {
        RunState {
            config_hash: hash.clone(),
            ..Default::default()
        }
    };
    write_json(&layout.state(), &state)?;

    let ctx = Ctx { cfg, layout: &layout, opts };
    let mut wall_time = BTreeMap::new();
    let mut failed_stage = None;
    let mut failure = None;
    let mut stopped = false;
    for stage in &stages {
        if state.completed.contains(stage) {
            continue;
        }
        let started = Instant::now();
        log::info!("stage {stage}");
        match ctx.run_stage(stage) {
            Ok(outcome) => {
                state.counters.retain(|c| c.stage != *stage);
                state.counters.push(outcome.counters);
                if !outcome.splits.is_empty() {
                    state.splits = outcome.splits;
                }
                state.completed.push(stage.clone());
                write_json(&layout.state(), &state)?;
                wall_time.insert(stage.clone(), started.elapsed().as_secs_f64());
            }
            Err(e) => {
                failed_stage = Some(stage.clone());
                failure = Some(e);
                break;
            }
        }
        if opts.stop_after.as_deref() == Some(stage.as_str()) {
            stopped = true;
            break;
        }
    }

    let mut counters = state.counters.clone();
    counters.sort_by_key(|c| STAGES.iter().position(|s| *s == c.stage));
    let report = RunReport {
        config_hash: hash,
        budget: token_budget(&cfg.budget.spec()?),
        completed: failure.is_none() && !stopped,
        failed_stage: failed_stage.clone(),
        stages: counters,
        splits: state.splits.clone(),
        wall_time,
    };
    write_json(&layout.run_report(), &report)?;
    write_json(&layout.root.join("timing.json"), &report.wall_time)?;
    match failure {
        Some(e) => Err(Error::Stage {
            stage: failed_stage.unwrap_or_default(),
            source: Box::new(e),
        }),
        None => Ok(report),
    }
}

struct StageOutcome {
    counters: StageCounters,
    splits: Vec<SplitSummary>,
}

impl From<StageCounters> for StageOutcome {
    fn from(counters: StageCounters) -> Self {
        Self {
            counters,
            splits: Vec::new(),
        }
    }
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    layout: &'a Layout,
    opts: &'a RunOptions,
}

impl Ctx<'_> {
    fn langs(&self) -> [(&LanguageTag, &[PathBuf]); 2] {
        [
            (&self.cfg.run.src, &self.cfg.inputs.src[..]),
            (&self.cfg.run.tgt, &self.cfg.inputs.tgt[..]),
        ]
    }

    fn per_input(&self, lang: &LanguageTag, i: usize, stage: &str) -> PathBuf {
        self.layout.manifest(&format!("{lang}.{i}.{stage}"))
    }

    fn merged(&self, lang: &LanguageTag) -> PathBuf {
        self.layout.manifest(&format!("{lang}.merged"))
    }

    fn save_partition(&self, p: &Partition, kept: &Path) -> Result<()> {
        save_manifest(&p.kept, kept)?;
        save_manifest(&p.dropped, &kept.with_extension("dropped.jsonl"))
    }

    fn run_stage(&self, stage: &str) -> Result<StageOutcome> {
        match stage {
            "clean" => self.clean().map(Into::into),
            "lid" => self.lid().map(Into::into),
            "toxicity" => self.toxicity().map(Into::into),
            "dedup" => self.dedup().map(Into::into),
            "merge" => self.merge().map(Into::into),
            "tokenizer" => self.tokenizer().map(Into::into),
            "lm" => self.lm().map(Into::into),
            "translate" => self.translate().map(Into::into),
            "score" => self.score().map(Into::into),
            "filter" => self.filter().map(Into::into),
            "report" => self.report().map(Into::into),
            "splits" => self.splits(),
            other => Err(Error::Config(format!("unknown stage {other:?}"))),
        }
    }

    fn clean(&self) -> Result<StageCounters> {
        let mut c = StageCounters::new("clean");
        for (lang, inputs) in self.langs() {
            for (i, path) in inputs.iter().enumerate() {
                let raw = read_raw(path)?;
                let (m, stats) = clean_documents(lang, &raw);
                c.docs_in += stats.docs_in as u64;
                c.tokens_in += raw.iter().map(|r| crate::count_word_tokens(&r.text)).sum::<u64>();
                c.docs_out += m.len() as u64;
                c.tokens_out += m.total_word_tokens();
                for (k, v) in [
                    ("duplicate_url", stats.duplicate_urls),
                    ("empty", stats.empty_after_clean),
                    ("duplicate_id", stats.duplicate_ids),
                ] {
                    *c.drops.entry(k.into()).or_default() += v as u64;
                }
                *c.extra.entry("replaced_invalid".into()).or_default() += stats.replaced_invalid as u64;
                save_manifest(&m, &self.per_input(lang, i, "clean"))?;
            }
        }
        Ok(c)
    }

    fn lid_model(&self) -> Result<LidModel> {
        if let Some(p) = &self.cfg.lid.model {
            return LidModel::load(p);
        }
        let mut samples = BTreeMap::new();
        for (lang, inputs) in self.langs() {
            let mut texts = Vec::new();
            for i in 0..inputs.len() {
                let m = load_manifest(&self.per_input(lang, i, "clean"))?;
                texts.extend(m.documents.into_iter().map(|d| d.text));
            }
            samples.insert(lang.clone(), texts);
        }
        let model = lid_train(&samples, self.cfg.lid.alpha)?;
        model.save(&self.layout.model("lid.json"))?;
        Ok(model)
    }

    fn lid(&self) -> Result<StageCounters> {
        let mut c = StageCounters::new("lid");
        let model = if self.cfg.lid.enabled { Some(self.lid_model()?) } else { None };
        for (lang, inputs) in self.langs() {
            for i in 0..inputs.len() {
                let m = load_manifest(&self.per_input(lang, i, "clean"))?;
                c.add_in(&m);
                let p = match &model {
                    Some(model) => lid_filter(&m, model, lang, self.cfg.lid.min_conf)?,
                    None => Partition {
                        kept: m.derive(Stage::Lid.as_str(), m.documents.clone()),
                        dropped: m.derive(Stage::Lid.as_str(), Vec::new()),
                    },
                };
                c.add_partition(&p);
                self.save_partition(&p, &self.per_input(lang, i, "lid"))?;
            }
        }
        Ok(c)
    }

    fn toxicity(&self) -> Result<StageCounters> {
        let mut c = StageCounters::new("toxicity");
        let lists = [&self.cfg.toxicity.src_words, &self.cfg.toxicity.tgt_words];
        for ((lang, inputs), list) in self.langs().into_iter().zip(lists) {
            let list = list.as_ref().map(|p| ToxicWordList::load(lang.clone(), p)).transpose()?;
            for i in 0..inputs.len() {
                let m = load_manifest(&self.per_input(lang, i, "lid"))?;
                c.add_in(&m);
                let p = match &list {
                    Some(list) => toxicity_filter(&m, list, self.cfg.toxicity.mode())?,
                    None => Partition {
                        kept: m.derive(Stage::Toxicity.as_str(), m.documents.clone()),
                        dropped: m.derive(Stage::Toxicity.as_str(), Vec::new()),
                    },
                };
                c.add_partition(&p);
                self.save_partition(&p, &self.per_input(lang, i, "toxicity"))?;
            }
        }
        Ok(c)
    }

    fn dedup(&self) -> Result<StageCounters> {
        let mut c = StageCounters::new("dedup");
        for (lang, inputs) in self.langs() {
            let mut ledger = DedupLedger::new();
            for i in 0..inputs.len() {
                let m = load_manifest(&self.per_input(lang, i, "toxicity"))?;
                c.add_in(&m);
                let p = dedup_paragraphs(&m, &mut ledger)?;
                c.add_partition(&p);
                self.save_partition(&p, &self.per_input(lang, i, "dedup"))?;
            }
            *c.extra.entry("paragraphs_removed".into()).or_default() += ledger.dropped();
            ledger.save(&self.layout.root.join("ledgers").join(format!("{lang}.dedup.json")))?;
        }
        Ok(c)
    }

    fn merge(&self) -> Result<StageCounters> {
        let mut c = StageCounters::new("merge");
        for (lang, inputs) in self.langs() {
            let parts = (0..inputs.len())
                .map(|i| load_manifest(&self.per_input(lang, i, "dedup")))
                .collect::<Result<Vec<_>>>()?;
            parts.iter().for_each(|m| c.add_in(m));
            let p = merge_corpora(&parts)?;
            c.add_partition(&p);
            self.save_partition(&p, &self.merged(lang))?;
        }
        Ok(c)
    }

    fn tokenizer(&self) -> Result<StageCounters> {
        let mut c = StageCounters::new("tokenizer");
        let t = &self.cfg.tokenizer;
        let mut corpora = BTreeMap::new();
        let mut plan = SamplingPlan::default();
        for (lang, _) in self.langs() {
            let m = load_manifest(&self.merged(lang))?;
            c.pass_through(&m);
            corpora.insert(lang.to_string(), manifest_sentences(&m));
            let weight = if *lang == self.cfg.run.tgt { t.tgt_weight as f64 } else { 1.0 };
            plan.languages.insert(
                lang.to_string(),
                PlanEntry {
                    count: t.sentences_per_lang,
                    weight,
                },
            );
        }
        let sample = sample_sentences(&corpora, &plan, self.cfg.run.seed)?;
        let texts: Vec<&str> = sample.iter().map(|s| s.text.as_str()).collect();
        let tok = bpe_train(&texts, t.vocab_size, t.byte_fallback)?;
        tok.save(&self.layout.model("tokenizer.json"))?;
        c.extra.insert("sentences".into(), sample.len() as u64);
        c.extra.insert("vocab_size".into(), tok.vocab_size() as u64);
        Ok(c)
    }

    fn load_tokenizer(&self) -> Result<TokenizerModel> {
        TokenizerModel::load(&self.layout.model("tokenizer.json"))
    }

    fn lm(&self) -> Result<StageCounters> {
        let mut c = StageCounters::new("lm");
        let tok = self.load_tokenizer()?;
        let m = load_manifest(&self.merged(&self.cfg.run.tgt))?;
        c.pass_through(&m);
        let docs: Vec<Vec<u32>> = m
            .documents
            .iter()
            .map(|d| {
                let mut ids = vec![BOS];
                ids.extend(tok.encode(&d.text));
                ids.push(EOS);
                ids
            })
            .collect();
        let lm_cfg = self.cfg.lm_config(tok.vocab_size())?;
        let tc = self.cfg.train_config()?;
        let params: TinyLmParams<f32> = init_params(&lm_cfg, tc.seed)?;
        let mut trainer = Trainer::new(params, tc.clone())?;
        let report = trainer.fit(&docs)?;
        save_checkpoint(&self.layout.model("lm.ckpt"), &trainer.checkpoint(tc.seed))?;
        write_atomic(&self.layout.model("lm_train.csv"), report.to_csv().as_bytes())?;
        c.extra.insert("steps".into(), report.steps);
        c.extra.insert("tokens_seen".into(), report.tokens_seen);
        Ok(c)
    }

    fn load_lm(&self) -> Result<(TinyLmParams<f32>, String)> {
        let path = self.layout.model("lm.ckpt");
        let id = checkpoint_id(&fs::read(&path)?);
        let ckpt: Checkpoint<f32> = load_checkpoint(&path)?;
        Ok((ckpt.params, id))
    }

    fn synthetic(&self) -> PathBuf {
        self.layout.manifest(&format!("{}.synthetic", self.cfg.run.tgt))
    }

    fn translate(&self) -> Result<StageCounters> {
        let mut c = StageCounters::new("translate");
        let tok = self.load_tokenizer()?;
        let (lm, _) = self.load_lm()?;
        let src = load_manifest(&self.merged(&self.cfg.run.src))?;
        c.add_in(&src);
        let desc = self.cfg.mt_descriptor();
        let backend: Arc<dyn MtBackend> = match &self.opts.backend {
            Some(b) => b.clone(),
            None => Arc::from(desc.connect()?),
        };
        let repairer = if self.cfg.translate.repair {
            Some(Repairer::new(&lm, &tok, self.cfg.translate.repair_max_new)?)
        } else {
            None
        };
        let mut out = translate_corpus(&src, backend.as_ref(), &desc, &tok, repairer.as_ref(), &self.cfg.translate_options())?;
        for d in &mut out.manifest.documents {
            d.bpe_tokens = Some(tok.encode(&d.text).len() as u64);
        }
        c.add_partition(&Partition {
            kept: out.manifest.clone(),
            dropped: out.failed.clone(),
        });
        let s = &out.stats;
        for (k, v) in [
            ("sentences", s.sentences as u64),
            ("chunks", s.chunks as u64),
            ("max_chunk_tokens", s.max_chunk_tokens as u64),
            ("requests", s.requests),
            ("retries", s.retries),
            ("truncated", s.truncated as u64),
            ("repaired", s.repaired as u64),
        ] {
            c.extra.insert(k.into(), v);
        }
        save_manifest(&out.manifest, &self.synthetic())?;
        save_manifest(&out.failed, &self.layout.manifest(&format!("{}.translate.failed", self.cfg.run.src)))?;
        let mut buf = Vec::new();
        for r in &out.records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        write_atomic(&self.layout.root.join("ledgers").join("translations.jsonl"), &buf)?;
        Ok(c)
    }

    fn scores_path(&self) -> PathBuf {
        self.layout.root.join("ledgers").join("scores.jsonl")
    }

    fn score(&self) -> Result<StageCounters> {
        let mut c = StageCounters::new("score");
        let tok = self.load_tokenizer()?;
        let (lm, id) = self.load_lm()?;
        let mut scorer = Scorer::new(&lm, &tok, id)?;
        scorer.trained_on = Some(ProvenanceKind::Clean);
        let syn = load_manifest(&self.synthetic())?;
        c.pass_through(&syn);
        let ledger = score_corpus(&syn, &scorer, self.cfg.filter.s, self.cfg.filter.e)?;
        c.extra.insert("scorable".into(), ledger.scorable().count() as u64);
        c.extra.insert("unscorable".into(), ledger.unscorable().count() as u64);
        ledger.save(&self.scores_path())?;
        Ok(c)
    }

    fn filtered(&self) -> PathBuf {
        self.layout.manifest(&format!("{}.filtered", self.cfg.run.tgt))
    }

    fn filter(&self) -> Result<StageCounters> {
        let mut c = StageCounters::new("filter");
        let syn = load_manifest(&self.synthetic())?;
        c.add_in(&syn);
        let ledger = ScoreLedger::load(&self.scores_path())?;
        let budget = token_budget(&self.cfg.budget.spec()?);
        let threshold = select_threshold(&ledger, &syn, budget, self.cfg.filter.unit.into())?;
        if let Some(short) = threshold.shortfall {
            log::warn!("scorable synthetic corpus is {short} tokens short of the {budget}-token budget");
        }
        let out = apply_filter(&syn, &ledger, &threshold, self.cfg.filter.pass_unscorable)?;
        let mut dropped = out.dropped.clone();
        dropped.documents.extend(out.unscorable.documents.iter().cloned());
        c.add_partition(&Partition {
            kept: out.kept.clone(),
            dropped,
        });
        c.extra.insert("kept_tokens".into(), threshold.kept_tokens);
        write_json(&self.layout.root.join("ledgers").join("threshold.json"), &threshold)?;
        save_manifest(&out.kept, &self.filtered())?;
        save_manifest(&out.dropped, &self.filtered().with_extension("dropped.jsonl"))?;
        save_manifest(&out.unscorable, &self.filtered().with_extension("unscorable.jsonl"))?;
        Ok(c)
    }

    fn report(&self) -> Result<StageCounters> {
        let mut c = StageCounters::new("report");
        let tok = self.load_tokenizer()?;
        let (lm, id) = self.load_lm()?;
        let scorer = Scorer::new(&lm, &tok, id)?;
        let kept = load_manifest(&self.filtered())?;
        let dropped = load_manifest(&self.filtered().with_extension("dropped.jsonl"))?;
        let clean = load_manifest(&self.merged(&self.cfg.run.tgt))?;
        let syn = load_manifest(&self.synthetic())?;
        c.pass_through(&kept);
        let bucket = self.cfg.report.bucket_size;
        for (name, m) in [("clean", &clean), ("synthetic", &syn), ("filtered", &kept)] {
            let stats = position_stats(m, &scorer, bucket)?;
            write_atomic(&self.layout.report(&format!("position_stats.{name}.csv")), position_stats_csv(&stats).as_bytes())?;
        }
        let lengths = length_report(&kept, &dropped, self.cfg.report.bin_width);
        write_atomic(&self.layout.report("length_summary.csv"), lengths.summary_csv().as_bytes())?;
        write_atomic(&self.layout.report("length_histogram.csv"), lengths.histogram_csv().as_bytes())?;
        let threshold: FilterThreshold = serde_json::from_slice(&fs::read(self.layout.root.join("ledgers").join("threshold.json"))?)?;
        let mut f = Vec::new();
        writeln!(f, "threshold,budget,kept_tokens,kept_docs")?;
        writeln!(f, "{},{},{},{}", threshold.value, threshold.budget, threshold.kept_tokens, threshold.kept_docs)?;
        write_atomic(&self.layout.report("threshold.csv"), &f)?;
        Ok(c)
    }

    fn splits(&self) -> Result<StageOutcome> {
        let mut c = StageCounters::new("splits");
        let tok = self.load_tokenizer()?;
        let mut clean = load_manifest(&self.merged(&self.cfg.run.tgt))?;
        for d in &mut clean.documents {
            d.bpe_tokens = Some(tok.encode(&d.text).len() as u64);
        }
        let syn = load_manifest(&self.synthetic())?;
        let filtered = load_manifest(&self.filtered())?;
        let plans = plan_splits(self.cfg)?;
        let pools = SplitPools {
            clean: &clean,
            synthetic: &syn,
            filtered: &filtered,
        };
        let drawn = materialize_splits(&plans, &pools, self.cfg.filter.unit.into(), self.cfg.run.seed)?;
        let unit: crate::filter::BudgetUnit = self.cfg.filter.unit.into();
        let mut summaries = Vec::new();
        for (plan, m) in &drawn {
            save_manifest(m, &self.layout.split(&plan.name))?;
            let tokens = m.documents.iter().map(|d| unit.tokens(d)).sum::<Result<u64>>()?;
            summaries.push(SplitSummary {
                name: plan.name.clone(),
                target_tokens: plan.target_tokens,
                tokens,
                docs: m.len() as u64,
            });
        }
        write_json(&self.layout.root.join("splits").join("plan.json"), &plans)?;
        c.extra = summaries.iter().map(|s| (s.name.clone(), s.docs)).collect();
        Ok(StageOutcome {
            counters: c,
            splits: summaries,
        })
    }
}
