//! One subcommand per pipeline stage. Each reads and writes manifests
//! directly, so stages can be run and inspected in isolation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Subcommand};
use monoforge::budget::{budget_feasible, token_budget, BudgetSpec, DEFAULT_TOKENS_PER_PARAM};
use monoforge::clean::lid::{DEFAULT_ALPHA, DEFAULT_MIN_CONF};
use monoforge::clean::{
    clean_documents, dedup_paragraphs, lid_filter, lid_train, merge_corpora, toxicity_filter, DedupLedger, LidModel,
    Partition, ToxicWordList, ToxicityMode,
};
use monoforge::filter::{
    apply_filter, checkpoint_id, length_report, position_stats, position_stats_csv, score_corpus, select_threshold,
    FilterThreshold, ScoreLedger, Scorer,
};
use monoforge::pipeline::read_raw;
use monoforge::tokenizer::{bpe_train, manifest_sentences, sample_sentences, PlanEntry, SamplingPlan, TokenizerModel, BOS, EOS};
use monoforge::translate::{translate_corpus, MtBackendDescriptor, Repairer, TranslateOptions};
use monoforge::{load_manifest, save_manifest, CorpusManifest, Error, LanguageTag};
use serde_json::json;
use tinylm::{
    generate, init_params, load_checkpoint, save_checkpoint, token_nll_trace, Checkpoint, GenerateConfig, TinyLmConfig,
    TinyLmParams, TrainConfig, Trainer,
};

use crate::{print_json, CliResult, Failure, Unit};

fn lang(code: &str) -> CliResult<LanguageTag> {
    LanguageTag::new(code).map_err(Failure::config)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(format!("{suffix}.jsonl"))
}

fn save_partition(p: &Partition, out: &Path) -> CliResult {
    save_manifest(&p.kept, out)?;
    save_manifest(&p.dropped, &sibling(out, "dropped"))?;
    Ok(())
}

fn partition_summary(p: &Partition) -> serde_json::Value {
    json!({
        "kept": p.kept.len(),
        "dropped": p.dropped.len(),
        "kept_tokens": p.kept.total_word_tokens(),
    })
}

/// Parses `key=value`.
fn pair(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))
}

fn load_lm(path: &Path) -> CliResult<(TinyLmParams<f32>, String)> {
    let id = checkpoint_id(&fs::read(path).map_err(Error::from)?);
    let ckpt: Checkpoint<f32> = load_checkpoint(path).map_err(Error::from)?;
    Ok((ckpt.params, id))
}

// clean ---------------------------------------------------------------------

#[derive(Args)]
pub struct CleanArgs {
    #[arg(long)]
    lang: String,
    /// A `.jsonl` file of `{url, text}` records or a directory of `.txt` files.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn clean(a: CleanArgs) -> CliResult {
    let raw = read_raw(&a.input)?;
    let (m, stats) = clean_documents(&lang(&a.lang)?, &raw);
    save_manifest(&m, &a.out)?;
    print_json(&json!({
        "docs_in": stats.docs_in,
        "docs_out": stats.docs_out,
        "empty_after_clean": stats.empty_after_clean,
        "duplicate_urls": stats.duplicate_urls,
        "duplicate_ids": stats.duplicate_ids,
        "replaced_invalid": stats.replaced_invalid,
    }))
}

// lid -----------------------------------------------------------------------

#[derive(Subcommand)]
pub enum LidCmd {
    /// Train a character n-gram model from labelled manifests.
    Train {
        /// `LANG=MANIFEST`, once per language.
        #[arg(long = "sample", value_parser = pair, required = true)]
        samples: Vec<(String, String)>,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep documents classified as the manifest's language.
    Filter {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_CONF)]
        min_conf: f64,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn lid(cmd: LidCmd) -> CliResult {
    match cmd {
        LidCmd::Train { samples, alpha, out } => {
            let mut by_lang = BTreeMap::new();
            for (code, path) in samples {
                let m = load_manifest(Path::new(&path))?;
                by_lang
                    .entry(lang(&code)?)
                    .or_insert_with(Vec::new)
                    .extend(m.documents.into_iter().map(|d| d.text));
            }
            let model = lid_train(&by_lang, alpha)?;
            model.save(&out)?;
            print_json(&json!({ "languages": by_lang.keys().map(|l| l.to_string()).collect::<Vec<_>>() }))
        }
        LidCmd::Filter {
            model,
            min_conf,
            input,
            out,
        } => {
            let model = LidModel::load(&model)?;
            let m = load_manifest(&input)?;
            let p = lid_filter(&m, &model, &m.lang, min_conf)?;
            save_partition(&p, &out)?;
            print_json(&partition_summary(&p))
        }
    }
}

// toxicity ------------------------------------------------------------------

#[derive(Args)]
pub struct ToxicityArgs {
    /// One word or phrase per line.
    #[arg(long)]
    words: PathBuf,
    /// Drop only when toxic words exceed this share of all words; by default
    /// any match drops the document.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn toxicity(a: ToxicityArgs) -> CliResult {
    let m = load_manifest(&a.input)?;
    let list = ToxicWordList::load(m.lang.clone(), &a.words)?;
    let mode = a.ratio.map_or(ToxicityMode::AnyMatch, ToxicityMode::Ratio);
    let p = toxicity_filter(&m, &list, mode)?;
    save_partition(&p, &a.out)?;
    print_json(&partition_summary(&p))
}

// dedup / merge -------------------------------------------------------------

#[derive(Args)]
pub struct DedupArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Hash ledger shared across invocations; loaded if present and
    /// rewritten afterwards. Without it every call starts fresh.
    #[arg(long)]
    ledger: Option<PathBuf>,
}

pub fn dedup(a: DedupArgs) -> CliResult {
    let m = load_manifest(&a.input)?;
    let mut ledger = match &a.ledger {
        Some(p) if p.exists() => DedupLedger::load(p)?,
        _ => DedupLedger::new(),
    };
    let before = ledger.dropped();
    let p = dedup_paragraphs(&m, &mut ledger)?;
    if let Some(path) = &a.ledger {
        ledger.save(path)?;
    }
    save_partition(&p, &a.out)?;
    let mut summary = partition_summary(&p);
    summary["paragraphs_removed"] = json!(ledger.dropped() - before);
    print_json(&summary)
}

#[derive(Args)]
pub struct MergeArgs {
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

pub fn merge(a: MergeArgs) -> CliResult {
    let parts = a.inputs.iter().map(|p| load_manifest(p)).collect::<Result<Vec<_>, _>>()?;
    let p = merge_corpora(&parts)?;
    save_partition(&p, &a.out)?;
    print_json(&partition_summary(&p))
}

// tokenizer -----------------------------------------------------------------

#[derive(Subcommand)]
pub enum TokenizerCmd {
    /// Train a shared BPE model on sentences sampled from each manifest.
    Train {
        /// One merged manifest per language.
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        vocab_size: usize,
        #[arg(long, default_value_t = 100_000)]
        sentences_per_lang: u64,
        /// `LANG=WEIGHT` upsampling factors.
        #[arg(long = "weight", value_parser = pair)]
        weights: Vec<(String, String)>,
        #[arg(long)]
        no_byte_fallback: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Encode {
        #[arg(long)]
        model: PathBuf,
        text: String,
    },
    Decode {
        #[arg(long)]
        model: PathBuf,
        ids: Vec<u32>,
    },
}

pub fn tokenizer(cmd: TokenizerCmd) -> CliResult {
    match cmd {
        TokenizerCmd::Train {
            inputs,
            vocab_size,
            sentences_per_lang,
            weights,
            no_byte_fallback,
            seed,
            out,
        } => {
            let mut corpora: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for path in &inputs {
                let m = load_manifest(path)?;
                corpora.entry(m.lang.to_string()).or_default().extend(manifest_sentences(&m));
            }
            let mut plan = SamplingPlan::uniform(corpora.keys().cloned(), sentences_per_lang);
            for (code, w) in weights {
                let weight: f64 = w
                    .parse()
                    .map_err(|_| Failure::config(Error::Config(format!("bad weight {w:?} for {code}"))))?;
                match plan.languages.get_mut(&code) {
                    Some(entry) => *entry = PlanEntry { weight, ..*entry },
                    None => return Err(Failure::config(Error::Config(format!("no input manifest for {code}")))),
                }
            }
            let sample = sample_sentences(&corpora, &plan, seed)?;
            let texts: Vec<&str> = sample.iter().map(|s| s.text.as_str()).collect();
            let tok = bpe_train(&texts, vocab_size, !no_byte_fallback)?;
            tok.save(&out)?;
            print_json(&json!({ "sentences": texts.len(), "vocab_size": tok.vocab_size(), "merges": tok.merges().len() }))
        }
        TokenizerCmd::Encode { model, text } => {
            let tok = TokenizerModel::load(&model)?;
            let ids: Vec<String> = tok.encode(&text).iter().map(u32::to_string).collect();
            println!("{}", ids.join(" "));
            Ok(())
        }
        TokenizerCmd::Decode { model, ids } => {
            let tok = TokenizerModel::load(&model)?;
            println!("{}", tok.decode(&ids)?);
            Ok(())
        }
    }
}

// lm ------------------------------------------------------------------------

#[derive(Args)]
pub struct ShapeArgs {
    /// `mini-1k`, `base-1k` or `mini-4k`; the vocabulary always comes from
    /// the tokenizer.
    #[arg(long, conflicts_with_all = ["n_embed", "blocks", "heads", "context"])]
    preset: Option<String>,
    #[arg(long, default_value_t = 64)]
    n_embed: usize,
    #[arg(long, default_value_t = 2)]
    blocks: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 256)]
    context: usize,
}

impl ShapeArgs {
    fn config(&self, vocab: usize) -> CliResult<TinyLmConfig> {
        let mut cfg = match &self.preset {
            Some(name) => TinyLmConfig::preset(name)
                .ok_or_else(|| Failure::config(Error::Config(format!("unknown LM preset {name:?}"))))?,
            None => TinyLmConfig::new(vocab, self.n_embed, self.blocks, self.heads, self.context),
        };
        cfg.vocab_size = vocab;
        cfg.validate().map_err(|e| Failure::config(Error::Config(e.to_string())))?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
pub enum LmCmd {
    /// Train a decoder LM on a manifest. Optimizer settings default to the
    /// reference recipe.
    Train {
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        weight_decay: Option<f64>,
        #[arg(long)]
        warmup_steps: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        grad_accum: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long)]
        token_limit: Option<u64>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Loss curve as CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long, default_value_t = 32)]
        max_new: usize,
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        prompt: String,
    },
    /// Per-token negative log-likelihood of a text, one line per position.
    Trace {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        text: String,
    },
}

pub fn lm(cmd: LmCmd) -> CliResult {
    match cmd {
        LmCmd::Train {
            tokenizer,
            input,
            shape,
            lr,
            weight_decay,
            warmup_steps,
            batch_size,
            grad_accum,
            epochs,
            max_steps,
            token_limit,
            seed,
            out,
            curve,
        } => {
            let tok = TokenizerModel::load(&tokenizer)?;
            let cfg = shape.config(tok.vocab_size())?;
            let d = TrainConfig::reference();
            let tc = TrainConfig {
                lr: lr.unwrap_or(d.lr),
                weight_decay: weight_decay.unwrap_or(d.weight_decay),
                warmup_steps: warmup_steps.unwrap_or(d.warmup_steps),
                batch_size: batch_size.unwrap_or(d.batch_size),
                grad_accum: grad_accum.unwrap_or(d.grad_accum),
                epochs: epochs.unwrap_or(d.epochs),
                max_steps,
                token_limit,
                seed,
                ..d
            };
            tc.validate().map_err(|e| Failure::config(Error::Config(e.to_string())))?;
            let m = load_manifest(&input)?;
            let docs: Vec<Vec<u32>> = m
                .documents
                .iter()
                .map(|d| [vec![BOS], tok.encode(&d.text), vec![EOS]].concat())
                .collect();
            let params: TinyLmParams<f32> = init_params(&cfg, seed).map_err(Error::from)?;
            let mut trainer = Trainer::new(params, tc).map_err(Error::from)?;
            let report = trainer.fit(&docs).map_err(Error::from)?;
            save_checkpoint(&out, &trainer.checkpoint(seed)).map_err(Error::from)?;
            if let Some(path) = curve {
                fs::write(path, report.to_csv()).map_err(Error::from)?;
            }
            print_json(&json!({
                "steps": report.steps,
                "tokens_seen": report.tokens_seen,
                "initial_loss": report.initial_loss(),
                "final_loss": report.final_loss(),
                "non_embedding_params": cfg.non_embedding_params(),
            }))
        }
        LmCmd::Generate {
            checkpoint,
            tokenizer,
            max_new,
            temperature,
            top_k,
            seed,
            prompt,
        } => {
            let tok = TokenizerModel::load(&tokenizer)?;
            let (params, _) = load_lm(&checkpoint)?;
            let prefix = [vec![BOS], tok.encode(&prompt)].concat();
            let gc = GenerateConfig {
                max_new,
                stop_ids: [EOS].into(),
                temperature,
                top_k,
                seed,
            };
            let out = generate(&params, &prefix, &gc).map_err(Error::from)?;
            println!("{}", tok.decode(&out[1..])?);
            Ok(())
        }
        LmCmd::Trace {
            checkpoint,
            tokenizer,
            text,
        } => {
            let tok = TokenizerModel::load(&tokenizer)?;
            let (params, _) = load_lm(&checkpoint)?;
            let ids = [vec![BOS], tok.encode(&text)].concat();
            let trace = token_nll_trace(&params, &ids).map_err(Error::from)?;
            println!("position,token,nll");
            for (k, nll) in trace.iter().enumerate() {
                println!("{},{},{nll}", k + 2, ids[k + 1]);
            }
            Ok(())
        }
    }
}

// translate -----------------------------------------------------------------

#[derive(Args)]
pub struct TranslateArgs {
    /// `identity`, `table:PATH` or an `http(s)://` URL.
    #[arg(long)]
    backend: String,
    #[arg(long, default_value = "unnamed")]
    model_id: String,
    #[arg(long)]
    src: String,
    #[arg(long)]
    tgt: String,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 256)]
    max_tokens: usize,
    #[arg(long, default_value_t = 5)]
    max_retries: u32,
    #[arg(long, default_value_t = 200)]
    backoff_ms: u64,
    /// Tokenizer used to measure chunk lengths.
    #[arg(long)]
    tokenizer: PathBuf,
    /// LM used to complete truncated translations; no repair without it.
    #[arg(long)]
    repair_lm: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    repair_max_new: usize,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn translate(a: TranslateArgs) -> CliResult {
    let desc = MtBackendDescriptor {
        batch_size: a.batch,
        beam: a.beam,
        timeout_secs: a.timeout_secs,
        ..MtBackendDescriptor::new(&a.backend, &a.model_id, lang(&a.src)?, lang(&a.tgt)?)
    };
    desc.validate().map_err(Failure::config)?;
    let tok = TokenizerModel::load(&a.tokenizer)?;
    let lm = a.repair_lm.as_deref().map(load_lm).transpose()?;
    let repairer = lm
        .as_ref()
        .map(|(params, _)| Repairer::new(params, &tok, a.repair_max_new))
        .transpose()?;
    let opts = TranslateOptions {
        max_tokens: a.max_tokens,
        max_retries: a.max_retries,
        backoff: Duration::from_millis(a.backoff_ms),
    };
    let m = load_manifest(&a.input)?;
    let backend = desc.connect()?;
    let out = translate_corpus(&m, backend.as_ref(), &desc, &tok, repairer.as_ref(), &opts)?;
    save_manifest(&out.manifest, &a.out)?;
    save_manifest(&out.failed, &sibling(&a.out, "failed"))?;
    let s = &out.stats;
    print_json(&json!({
        "docs_in": s.docs_in,
        "docs_out": s.docs_out,
        "docs_failed": s.docs_failed,
        "sentences": s.sentences,
        "chunks": s.chunks,
        "max_chunk_tokens": s.max_chunk_tokens,
        "requests": s.requests,
        "retries": s.retries,
        "truncated": s.truncated,
        "repaired": s.repaired,
    }))
}

// filter --------------------------------------------------------------------

#[derive(Subcommand)]
pub enum FilterCmd {
    /// Score every document with windowed perplexity.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = tinylm::DEFAULT_SKIP)]
        s: usize,
        #[arg(long, default_value_t = tinylm::DEFAULT_END)]
        e: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick the smallest perplexity cut-off that fills a token budget.
    Threshold {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, required_unless_present = "preset")]
        budget: Option<u64>,
        #[arg(long, conflicts_with = "budget")]
        preset: Option<String>,
        #[arg(long, value_enum, default_value_t = Unit::Word)]
        unit: Unit,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a manifest by a previously selected threshold.
    Apply {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        threshold: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        pass_unscorable: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-position NLL statistics and kept/dropped length distributions.
    Report {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        kept: PathBuf,
        #[arg(long)]
        dropped: PathBuf,
        #[arg(long, default_value_t = 64)]
        bucket_size: usize,
        #[arg(long, default_value_t = 100)]
        bin_width: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

pub fn filter(cmd: FilterCmd) -> CliResult {
    match cmd {
        FilterCmd::Score {
            checkpoint,
            tokenizer,
            input,
            s,
            e,
            out,
        } => {
            let tok = TokenizerModel::load(&tokenizer)?;
            let (params, id) = load_lm(&checkpoint)?;
            let scorer = Scorer::new(&params, &tok, id)?;
            let ledger = score_corpus(&load_manifest(&input)?, &scorer, s, e)?;
            ledger.save(&out)?;
            print_json(&json!({
                "scorable": ledger.scorable().count(),
                "unscorable": ledger.unscorable().count(),
            }))
        }
        FilterCmd::Threshold {
            ledger,
            input,
            budget,
            preset,
            unit,
            out,
        } => {
            let budget = match (budget, preset) {
                (Some(b), _) => b,
                (None, Some(p)) => token_budget(&BudgetSpec::preset(&p).map_err(Failure::config)?),
                (None, None) => unreachable!("clap requires one of the two"),
            };
            let ledger = ScoreLedger::load(&ledger)?;
            let t = select_threshold(&ledger, &load_manifest(&input)?, budget, unit.into())?;
            fs::write(&out, serde_json::to_vec_pretty(&t).map_err(Error::from)?).map_err(Error::from)?;
            print_json(&json!({
                "threshold": t.value,
                "budget": t.budget,
                "kept_docs": t.kept_docs,
                "kept_tokens": t.kept_tokens,
                "shortfall": t.shortfall,
            }))
        }
        FilterCmd::Apply {
            ledger,
            threshold,
            input,
            pass_unscorable,
            out,
        } => {
            let ledger = ScoreLedger::load(&ledger)?;
            let t: FilterThreshold =
                serde_json::from_slice(&fs::read(&threshold).map_err(Error::from)?).map_err(Error::from)?;
            let o = apply_filter(&load_manifest(&input)?, &ledger, &t, pass_unscorable)?;
            save_manifest(&o.kept, &out)?;
            save_manifest(&o.dropped, &sibling(&out, "dropped"))?;
            save_manifest(&o.unscorable, &sibling(&out, "unscorable"))?;
            print_json(&json!({
                "kept": o.kept.len(),
                "dropped": o.dropped.len(),
                "unscorable": o.unscorable.len(),
            }))
        }
        FilterCmd::Report {
            checkpoint,
            tokenizer,
            kept,
            dropped,
            bucket_size,
            bin_width,
            out_dir,
        } => {
            let tok = TokenizerModel::load(&tokenizer)?;
            let (params, id) = load_lm(&checkpoint)?;
            let scorer = Scorer::new(&params, &tok, id)?;
            let (kept, dropped) = (load_manifest(&kept)?, load_manifest(&dropped)?);
            fs::create_dir_all(&out_dir).map_err(Error::from)?;
            let write = |name: &str, body: String| fs::write(out_dir.join(name), body).map_err(Error::from);
            for (name, m) in [("kept", &kept), ("dropped", &dropped)] {
                write(&format!("position_stats.{name}.csv"), position_stats_csv(&position_stats(m, &scorer, bucket_size)?))?;
            }
            let lengths = length_report(&kept, &dropped, bin_width);
            write("length_summary.csv", lengths.summary_csv())?;
            write("length_histogram.csv", lengths.histogram_csv())?;
            print_json(&lengths.partitions)
        }
    }
}

// budget --------------------------------------------------------------------

#[derive(Args)]
pub struct BudgetArgs {
    /// `mini-1k`, `base-1k` or `paper-base`.
    #[arg(long, conflicts_with = "params", required_unless_present = "params")]
    preset: Option<String>,
    /// Non-embedding parameter count.
    #[arg(long)]
    params: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_TOKENS_PER_PARAM)]
    ratio: f64,
    #[arg(long)]
    hard_limit: Option<u64>,
    /// Report whether this manifest fills the budget.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Unit::Word)]
    unit: Unit,
}

pub fn budget(a: BudgetArgs) -> CliResult {
    let mut spec = match (&a.preset, a.params) {
        (Some(name), _) => BudgetSpec::preset(name).map_err(Failure::config)?,
        (None, Some(p)) => BudgetSpec::new(p, a.ratio),
        (None, None) => unreachable!("clap requires one of the two"),
    };
    if a.hard_limit.is_some() {
        spec.hard_limit = a.hard_limit;
    }
    spec.validate().map_err(Failure::config)?;
    let mut out = json!({ "spec": spec, "budget": token_budget(&spec) });
    if let Some(path) = &a.manifest {
        let m: CorpusManifest = load_manifest(path)?;
        out["feasibility"] = serde_json::to_value(budget_feasible(&m, &spec, a.unit.into())?).map_err(Error::from)?;
    }
    print_json(&out)
}
