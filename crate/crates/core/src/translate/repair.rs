//! Detection and LM-based completion of translations cut off at the length
//! limit.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use tinylm::{generate, GenerateConfig, TinyLmParams};

use crate::tokenizer::{TokenizerModel, BOS, EOS};
use crate::{Error, Result};

pub const DEFAULT_REPAIR_MAX_NEW: usize = 64;
const TERMINAL: &[char] = &['.', '?', '!', '।', '॥', '。', '！', '？'];
const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '»', '”', '’'];

pub fn ends_with_terminal(text: &str) -> bool {
    text.trim_end().trim_end_matches(CLOSERS).ends_with(TERMINAL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    /// Truncated and completed by the LM.
    Repaired,
    /// Truncated, no repair model available.
    Truncated,
    Failed,
}

/// Outcome for one source sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub doc_id: String,
    pub paragraph_index: usize,
    pub sentence_index: usize,
    pub source: String,
    pub output: String,
    /// Output before repair, kept for audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
    pub chunks: usize,
    pub truncated: bool,
    pub repaired: bool,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// True when the output is exactly at the token limit and does not end in
/// terminal punctuation.
pub fn is_truncated(output: &str, mt_tokenizer: &TokenizerModel, max_tokens: usize) -> bool {
    mt_tokenizer.encode(output).len() == max_tokens && !ends_with_terminal(output)
}

pub fn detect_truncation(record: &TranslationRecord, mt_tokenizer: &TokenizerModel, max_tokens: usize) -> bool {
    is_truncated(&record.output, mt_tokenizer, max_tokens)
}

/// A target-language LM and its tokenizer, used to finish truncated output.
pub struct Repairer<'a> {
    pub lm: &'a TinyLmParams<f32>,
    pub tokenizer: &'a TokenizerModel,
    pub max_new: usize,
}

impl<'a> Repairer<'a> {
    pub fn new(lm: &'a TinyLmParams<f32>, tokenizer: &'a TokenizerModel, max_new: usize) -> Result<Self> {
        if lm.vocab_size() != tokenizer.vocab_size() {
            return Err(Error::Translate(format!(
                "repair LM has vocab {} but tokenizer has {}",
                lm.vocab_size(),
                tokenizer.vocab_size()
            )));
        }
        Ok(Self { lm, tokenizer, max_new })
    }

    /// Greedy continuation of `text` until a token ending in terminal
    /// punctuation, EOS, or `max_new` tokens.
    pub fn complete(&self, text: &str) -> Result<String> {
        let stop: BTreeSet<u32> = self
            .tokenizer
            .ids_where(|p| ends_with_terminal(p))
            .into_iter()
            .chain([EOS])
            .collect();
        let mut prefix = vec![BOS];
        prefix.extend(self.tokenizer.encode(text));
        let keep = self.lm.config().context_len.saturating_sub(1).max(1);
        if prefix.len() > keep {
            prefix.drain(..prefix.len() - keep);
        }
        let cfg = GenerateConfig {
            stop_ids: stop,
            ..GenerateConfig::greedy(self.max_new)
        };
        let out = generate(self.lm, &prefix, &cfg)?;
        self.tokenizer.decode(&out[prefix.len()..])
    }
}

/// Appends an LM continuation to a truncated record; other records are
/// returned unchanged.
pub fn repair_truncated(record: TranslationRecord, repairer: &Repairer<'_>) -> Result<TranslationRecord> {
    if !record.truncated || record.repaired {
        return Ok(record);
    }
    let continuation = repairer.complete(&record.output)?;
    Ok(TranslationRecord {
        raw_output: Some(record.output.clone()),
        output: format!("{}{}", record.output, continuation),
        repaired: true,
        status: RecordStatus::Repaired,
        ..record
    })
}
