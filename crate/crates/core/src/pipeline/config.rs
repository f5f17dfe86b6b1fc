//! Declarative run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tinylm::{TinyLmConfig, TrainConfig};

use crate::budget::BudgetSpec;
use crate::clean::ToxicityMode;
use crate::corpus::LanguageTag;
use crate::filter::BudgetUnit;
use crate::translate::{MtBackendDescriptor, TranslateOptions, DEFAULT_MAX_TOKENS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub run: RunSection,
    pub inputs: InputsSection,
    #[serde(default)]
    pub lid: LidSection,
    #[serde(default)]
    pub toxicity: ToxicitySection,
    pub tokenizer: TokenizerSection,
    pub lm: LmSection,
    pub translate: TranslateSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub report: ReportSection,
    pub budget: BudgetSection,
    #[serde(default)]
    pub splits: SplitsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub src: LanguageTag,
    pub tgt: LanguageTag,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Last stage to run; all stages when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until: Option<String>,
}

/// Each entry is a `.jsonl` file of `{"url": ..., "text": ...}` records or a
/// directory whose `*.txt` files are one document each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputsSection {
    pub src: Vec<PathBuf>,
    pub tgt: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Trained model; when absent one is trained on the cleaned inputs.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default = "default_min_conf")]
    pub min_conf: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl Default for LidSection {
    fn default() -> Self {
        Self {
            enabled: true,
            model: None,
            min_conf: default_min_conf(),
            alpha: default_alpha(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToxicitySection {
    #[serde(default)]
    pub src_words: Option<PathBuf>,
    #[serde(default)]
    pub tgt_words: Option<PathBuf>,
    /// Drop when the share of toxic words exceeds this; any match when unset.
    #[serde(default)]
    pub ratio: Option<f64>,
}

impl ToxicitySection {
    pub fn mode(&self) -> ToxicityMode {
        match self.ratio {
            Some(r) => ToxicityMode::Ratio(r),
            None => ToxicityMode::AnyMatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerSection {
    pub vocab_size: usize,
    #[serde(default = "yes")]
    pub byte_fallback: bool,
    /// Sentences sampled per language for training.
    pub sentences_per_lang: u64,
    /// Extra weight for the target language's sample.
    #[serde(default = "one")]
    pub tgt_weight: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmSection {
    /// `mini-1k`, `base-1k` or `mini-4k`; explicit sizes override it.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub n_embed: Option<usize>,
    #[serde(default)]
    pub num_blocks: Option<usize>,
    #[serde(default)]
    pub num_heads: Option<usize>,
    #[serde(default)]
    pub context_len: Option<usize>,
    #[serde(default)]
    pub train: LmTrainSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmTrainSection {
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub warmup_steps: Option<u64>,
    pub batch_size: Option<usize>,
    pub grad_accum: Option<usize>,
    pub epochs: Option<usize>,
    pub max_steps: Option<u64>,
    pub token_limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslateSection {
    /// `identity`, `table:<path>` or an HTTP(S) URL.
    pub endpoint: String,
    #[serde(default = "default_model_id")]
    pub model_id: String,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_beam")]
    pub beam: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "yes")]
    pub repair: bool,
    #[serde(default = "default_repair_max_new")]
    pub repair_max_new: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    #[serde(default = "default_skip")]
    pub s: usize,
    #[serde(default = "default_end")]
    pub e: usize,
    #[serde(default)]
    pub unit: Unit,
    #[serde(default)]
    pub pass_unscorable: bool,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            s: default_skip(),
            e: default_end(),
            unit: Unit::Word,
            pass_unscorable: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    #[default]
    Word,
    Bpe,
}

impl From<Unit> for BudgetUnit {
    fn from(u: Unit) -> Self {
        match u {
            Unit::Word => BudgetUnit::Word,
            Unit::Bpe => BudgetUnit::Bpe,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    #[serde(default = "default_bucket")]
    pub bucket_size: usize,
    #[serde(default = "default_bin")]
    pub bin_width: u64,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            bucket_size: default_bucket(),
            bin_width: default_bin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub params: Option<u64>,
    #[serde(default)]
    pub ratio: Option<f64>,
    #[serde(default)]
    pub hard_limit: Option<u64>,
}

impl BudgetSection {
    pub fn spec(&self) -> Result<BudgetSpec> {
        let mut spec = match (&self.preset, self.params, self.hard_limit) {
            (Some(p), _, _) => BudgetSpec::preset(p)?,
            (None, Some(p), _) => BudgetSpec::new(p, crate::budget::DEFAULT_TOKENS_PER_PARAM),
            (None, None, Some(_)) => BudgetSpec::new(0, crate::budget::DEFAULT_TOKENS_PER_PARAM),
            (None, None, None) => return Err(Error::Config("budget needs a preset, params or hard_limit".into())),
        };
        if let Some(p) = self.params {
            spec.non_embedding_params = p;
        }
        if let Some(r) = self.ratio {
            spec.tokens_per_param = r;
        }
        if self.hard_limit.is_some() {
            spec.hard_limit = self.hard_limit;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitsSection {
    #[serde(default = "yes")]
    pub clean: bool,
    #[serde(default = "yes")]
    pub unfiltered: bool,
    #[serde(default = "yes")]
    pub filtered: bool,
    /// Size of the extra clean split relative to the budget; 0 disables it.
    #[serde(default = "default_extension")]
    pub extension: f64,
}

impl Default for SplitsSection {
    fn default() -> Self {
        Self {
            clean: true,
            unfiltered: true,
            filtered: true,
            extension: default_extension(),
        }
    }
}

fn yes() -> bool {
    true
}
fn one() -> u32 {
    1
}
fn default_min_conf() -> f64 {
    crate::clean::lid::DEFAULT_MIN_CONF
}
fn default_alpha() -> f64 {
    crate::clean::lid::DEFAULT_ALPHA
}
fn default_model_id() -> String {
    "unknown".into()
}
fn default_batch() -> usize {
    64
}
fn default_beam() -> usize {
    5
}
fn default_timeout() -> u64 {
    120
}
fn default_max_tokens() -> usize {
    DEFAULT_MAX_TOKENS
}
fn default_retries() -> u32 {
    5
}
fn default_backoff() -> u64 {
    200
}
fn default_repair_max_new() -> usize {
    crate::translate::DEFAULT_REPAIR_MAX_NEW
}
fn default_skip() -> usize {
    tinylm::DEFAULT_SKIP
}
fn default_end() -> usize {
    tinylm::DEFAULT_END
}
fn default_bucket() -> usize {
    64
}
fn default_bin() -> u64 {
    100
}
fn default_extension() -> f64 {
    0.1
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.run.out_dir);
        self.inputs.src.iter_mut().for_each(fix);
        self.inputs.tgt.iter_mut().for_each(fix);
        self.lid.model.iter_mut().for_each(fix);
        self.toxicity.src_words.iter_mut().for_each(fix);
        self.toxicity.tgt_words.iter_mut().for_each(fix);
        if let Some(rest) = self.translate.endpoint.strip_prefix("table:") {
            let p = Path::new(rest);
            if p.is_relative() {
                self.translate.endpoint = format!("table:{}", base.join(p).display());
            }
        }
    }

    /// Model config with the given vocabulary size.
    pub fn lm_config(&self, vocab_size: usize) -> Result<TinyLmConfig> {
        let lm = &self.lm;
        let mut cfg = match &lm.preset {
            Some(name) => TinyLmConfig::preset(name).ok_or_else(|| Error::Config(format!("unknown LM preset {name:?}")))?,
            None => {
                let need = |v: Option<usize>, what: &str| v.ok_or_else(|| Error::Config(format!("lm.{what} is required without a preset")));
                TinyLmConfig::new(
                    vocab_size,
                    need(lm.n_embed, "n_embed")?,
                    need(lm.num_blocks, "num_blocks")?,
                    need(lm.num_heads, "num_heads")?,
                    need(lm.context_len, "context_len")?,
                )
            }
        };
        if lm.preset.is_some() {
            let d = lm.n_embed.unwrap_or(cfg.n_embed);
            let h = lm.num_heads.unwrap_or(cfg.num_heads);
            let b = lm.num_blocks.unwrap_or(cfg.num_blocks);
            let c = lm.context_len.unwrap_or(cfg.context_len);
            if (d, h, b, c) != (cfg.n_embed, cfg.num_heads, cfg.num_blocks, cfg.context_len) {
                cfg = TinyLmConfig::new(vocab_size, d, b, h, c);
            }
        }
        cfg.vocab_size = vocab_size;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.lm.train;
        let mut tc = TrainConfig::reference();
        tc.seed = self.run.seed;
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = t.$f { tc.$f = v; } )*};
        }
        set!(lr, weight_decay, warmup_steps, batch_size, grad_accum, epochs);
        tc.max_steps = t.max_steps;
        tc.token_limit = t.token_limit;
        tc.validate()?;
        Ok(tc)
    }

    pub fn mt_descriptor(&self) -> MtBackendDescriptor {
        let t = &self.translate;
        MtBackendDescriptor {
            batch_size: t.batch_size,
            beam: t.beam,
            timeout_secs: t.timeout_secs,
            ..MtBackendDescriptor::new(&t.endpoint, &t.model_id, self.run.src.clone(), self.run.tgt.clone())
        }
    }

    pub fn translate_options(&self) -> TranslateOptions {
        TranslateOptions {
            max_tokens: self.translate.max_tokens,
            max_retries: self.translate.max_retries,
            backoff: std::time::Duration::from_millis(self.translate.backoff_ms),
        }
    }

    /// Checks every stage parameter before any work starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.run.src.same_language(&self.run.tgt) {
            return bad("source and target language must differ".into());
        }
        if self.inputs.src.is_empty() || self.inputs.tgt.is_empty() {
            return bad("inputs.src and inputs.tgt must list at least one path".into());
        }
        for p in self.inputs.src.iter().chain(&self.inputs.tgt) {
            if !p.exists() {
                return bad(format!("input {} does not exist", p.display()));
            }
        }
        for p in [&self.lid.model, &self.toxicity.src_words, &self.toxicity.tgt_words].into_iter().flatten() {
            if !p.exists() {
                return bad(format!("{} does not exist", p.display()));
            }
        }
        if !(0.0..=1.0).contains(&self.lid.min_conf) || !(self.lid.alpha > 0.0) {
            return bad("lid.min_conf must be in [0, 1] and lid.alpha positive".into());
        }
        if let Some(r) = self.toxicity.ratio {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("toxicity.ratio {r} outside [0, 1]"));
            }
        }
        if self.tokenizer.sentences_per_lang == 0 || self.tokenizer.tgt_weight == 0 {
            return bad("tokenizer.sentences_per_lang and tgt_weight must be positive".into());
        }
        if self.tokenizer.vocab_size == 0 {
            return bad("tokenizer.vocab_size must be positive".into());
        }
        // Vocabulary is only known after tokenizer training; any valid size
        // exercises the same shape checks.
        let lm = self.lm_config(self.tokenizer.vocab_size)?;
        self.train_config()?;
        self.mt_descriptor().validate()?;
        if self.translate.max_tokens == 0 {
            return bad("translate.max_tokens must be positive".into());
        }
        if self.filter.e <= self.filter.s + 1 {
            return bad(format!("filter window ({}, {}] is empty", self.filter.s, self.filter.e));
        }
        if self.filter.e > lm.context_len {
            return bad(format!(
                "filter.e = {} exceeds the scorer context of {} tokens",
                self.filter.e, lm.context_len
            ));
        }
        if self.report.bucket_size == 0 || self.report.bin_width == 0 {
            return bad("report.bucket_size and report.bin_width must be positive".into());
        }
        self.budget.spec()?;
        if !(0.0..=1.0).contains(&self.splits.extension) {
            return bad("splits.extension must be in [0, 1]".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
        [run]
        src = "en"
        tgt = "hi"
        out_dir = "out"
        seed = 3

        [inputs]
        src = ["en.jsonl"]
        tgt = ["hi.jsonl"]

        [tokenizer]
        vocab_size = 400
        sentences_per_lang = 100

        [lm]
        n_embed = 16
        num_blocks = 1
        num_heads = 2
        context_len = 64
        train = { max_steps = 10, lr = 0.003, warmup_steps = 2 }

        [translate]
        endpoint = "identity"

        [filter]
        e = 64

        [budget]
        hard_limit = 1000
    "#;

    #[test]
    fn parses_with_defaults() {
        let cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.filter.s, 10);
        assert_eq!(cfg.translate.max_tokens, 256);
        assert_eq!(cfg.translate.beam, 5);
        assert!(cfg.lid.enabled && cfg.splits.filtered);
        assert_eq!(cfg.splits.extension, 0.1);
        assert_eq!(crate::budget::token_budget(&cfg.budget.spec().unwrap()), 1000);
        let tc = cfg.train_config().unwrap();
        assert_eq!((tc.lr, tc.max_steps, tc.seed, tc.weight_decay), (0.003, Some(10), 3, 0.1));
        assert_eq!(cfg.lm_config(400).unwrap().context_len, 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("[filter]", "[filter]\nbogus = 1");
        assert!(matches!(PipelineConfig::from_toml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn validation_catches_bad_window_before_work() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("en.jsonl"), "").unwrap();
        std::fs::write(dir.path().join("hi.jsonl"), "").unwrap();
        let mut cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        cfg.resolve_paths(dir.path());
        cfg.validate().unwrap();
        cfg.filter.e = 1024;
        assert!(cfg.validate().unwrap_err().to_string().contains("exceeds the scorer context"));
        cfg.filter.e = 64;
        cfg.translate.endpoint = "ftp://x".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn presets_and_budget_combinations() {
        let mut cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        cfg.lm = LmSection {
            preset: Some("mini-4k".into()),
            n_embed: None,
            num_blocks: None,
            num_heads: None,
            context_len: None,
            train: Default::default(),
        };
        let lm = cfg.lm_config(56_000).unwrap();
        assert_eq!((lm.context_len, lm.num_blocks, lm.vocab_size), (4096, 4, 56_000));
        cfg.budget = BudgetSection {
            preset: Some("base-1k".into()),
            params: None,
            ratio: None,
            hard_limit: None,
        };
        assert_eq!(crate::budget::token_budget(&cfg.budget.spec().unwrap()), 2_380_000_000);
        cfg.budget = BudgetSection {
            preset: None,
            params: Some(85_000_000),
            ratio: None,
            hard_limit: None,
        };
        assert_eq!(crate::budget::token_budget(&cfg.budget.spec().unwrap()), 1_700_000_000);
        cfg.budget.params = None;
        assert!(cfg.budget.spec().is_err());
    }
}
