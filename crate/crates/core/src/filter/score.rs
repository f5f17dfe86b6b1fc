use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tinylm::{perplexity_window, Scalar, TinyLmParams};

use crate::corpus::{CorpusManifest, ProvenanceKind};
use crate::tokenizer::{TokenizerModel, BOS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocScore {
    pub doc_id: String,
    pub ppl: Option<f64>,
    pub tokens_scored: usize,
    pub s: usize,
    pub e: usize,
    pub scorable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLedger {
    pub checkpoint_id: String,
    pub s: usize,
    pub e: usize,
    /// One entry per document, in manifest order.
    pub entries: Vec<DocScore>,
}

#[derive(Serialize, Deserialize)]
struct LedgerHeader {
    checkpoint_id: String,
    s: usize,
    e: usize,
}

#[derive(Serialize, Deserialize)]
struct LedgerHeaderLine {
    ledger: LedgerHeader,
}

impl ScoreLedger {
    pub fn scorable(&self) -> impl Iterator<Item = &DocScore> {
        self.entries.iter().filter(|d| d.scorable)
    }

    pub fn unscorable(&self) -> impl Iterator<Item = &DocScore> {
        self.entries.iter().filter(|d| !d.scorable)
    }

    pub fn by_id(&self) -> HashMap<&str, &DocScore> {
        self.entries.iter().map(|d| (d.doc_id.as_str(), d)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = LedgerHeaderLine {
            ledger: LedgerHeader {
                checkpoint_id: self.checkpoint_id.clone(),
                s: self.s,
                e: self.e,
            },
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for d in &self.entries {
            serde_json::to_writer(&mut w, d)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let err = |line: usize, reason: String| Error::Parse {
            path: display.clone(),
            line,
            reason,
        };
        let mut lines = BufReader::new(File::open(path)?).lines();
        let header: LedgerHeaderLine = match lines.next() {
            Some(l) => serde_json::from_str(&l?).map_err(|e| err(1, e.to_string()))?,
            None => return Err(err(1, "missing ledger header".into())),
        };
        let mut entries = Vec::new();
        for (i, l) in lines.enumerate() {
            let l = l?;
            if l.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&l).map_err(|e| err(i + 2, e.to_string()))?);
        }
        Ok(Self {
            checkpoint_id: header.ledger.checkpoint_id,
            s: header.ledger.s,
            e: header.ledger.e,
            entries,
        })
    }
}

/// Content hash identifying a scorer checkpoint.
pub fn checkpoint_id(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A scoring model with its tokenizer.
pub struct Scorer<'a, F: Scalar> {
    pub params: &'a TinyLmParams<F>,
    pub tokenizer: &'a TokenizerModel,
    pub checkpoint_id: String,
    /// Provenance of the scorer's training corpus, when known.
    pub trained_on: Option<ProvenanceKind>,
}

impl<'a, F: Scalar> Scorer<'a, F> {
    pub fn new(params: &'a TinyLmParams<F>, tokenizer: &'a TokenizerModel, checkpoint_id: impl Into<String>) -> Result<Self> {
        if params.vocab_size() != tokenizer.vocab_size() {
            return Err(Error::Filter(format!(
                "scorer vocab {} does not match tokenizer vocab {}",
                params.vocab_size(),
                tokenizer.vocab_size()
            )));
        }
        Ok(Self {
            params,
            tokenizer,
            checkpoint_id: checkpoint_id.into(),
            trained_on: None,
        })
    }

    /// The sequence a document is scored on: BOS followed by its tokens.
    pub fn ids(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::with_capacity(text.len() / 3 + 2);
        ids.push(BOS);
        ids.extend(self.tokenizer.encode(text));
        ids
    }
}

/// Windowed perplexity of every document, in manifest order.
pub fn score_corpus<F: Scalar>(manifest: &CorpusManifest, scorer: &Scorer<'_, F>, s: usize, e: usize) -> Result<ScoreLedger> {
    let ctx = scorer.params.config().context_len;
    if ctx < e {
        return Err(Error::Filter(format!("scorer context {ctx} is shorter than the window end {e}")));
    }
    if scorer.trained_on == Some(ProvenanceKind::Synthetic) {
        log::warn!("scorer {} was trained on synthetic text; it may favor poor translations", scorer.checkpoint_id);
    }
    let entries = manifest
        .documents
        .par_iter()
        .map(|d| {
            let mut ids = scorer.ids(&d.text);
            ids.truncate(e);
            let w = perplexity_window(scorer.params, &ids, s, e)?;
            Ok(DocScore {
                doc_id: d.id.clone(),
                ppl: w.ppl,
                tokens_scored: w.tokens_scored,
                s,
                e,
                scorable: w.scorable,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreLedger {
        checkpoint_id: scorer.checkpoint_id.clone(),
        s,
        e,
        entries,
    })
}
