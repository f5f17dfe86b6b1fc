use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use rayon::prelude::*;

use super::backend::{BackendError, MtBackend, MtBackendDescriptor, WireRequest};
use super::chunk::{join_chunks, sentence_chunks, DEFAULT_MAX_TOKENS};
use super::repair::{is_truncated, repair_truncated, RecordStatus, Repairer, TranslationRecord};
use super::split::{sentence_joiner, split_document};
use crate::corpus::{CorpusManifest, Document, DropReason, Provenance, Stage};
use crate::hash::{hex128, murmur3_128};
use crate::tokenizer::TokenizerModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TranslateOptions {
    pub max_tokens: usize,
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    pub backoff: Duration,
}

impl Default for TranslateOptions {
    fn default() -> Self {
        Self {
            max_tokens: DEFAULT_MAX_TOKENS,
            max_retries: 5,
            backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TranslateStats {
    pub docs_in: usize,
    pub docs_out: usize,
    pub docs_failed: usize,
    pub sentences: usize,
    pub chunks: usize,
    pub max_chunk_tokens: usize,
    pub requests: u64,
    pub retries: u64,
    pub truncated: usize,
    pub repaired: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationOutcome {
    pub manifest: CorpusManifest,
    /// Source documents that could not be translated.
    pub failed: CorpusManifest,
    pub records: Vec<TranslationRecord>,
    pub stats: TranslateStats,
}

/// Id of the synthetic counterpart of `source_id` in language `tgt`.
pub fn synthetic_id(source_id: &str, tgt: &str) -> String {
    hex128(murmur3_128(format!("syn:{tgt}:{source_id}").as_bytes(), 0))
}

struct Ctx<'a> {
    backend: &'a dyn MtBackend,
    desc: &'a MtBackendDescriptor,
    tok: &'a TokenizerModel,
    repairer: Option<&'a Repairer<'a>>,
    opts: &'a TranslateOptions,
    requests: AtomicU64,
    retries: AtomicU64,
}

impl Ctx<'_> {
    fn call(&self, req: &WireRequest) -> std::result::Result<Vec<String>, BackendError> {
        let mut attempt = 0;
        loop {
            self.requests.fetch_add(1, Ordering::Relaxed);
            match self.backend.translate(req) {
                Ok(out) if out.len() == req.sentences.len() => return Ok(out),
                Ok(out) => {
                    return Err(BackendError::Protocol(format!(
                        "{} translations for {} sentences",
                        out.len(),
                        req.sentences.len()
                    )))
                }
                Err(BackendError::Transient(e)) if attempt < self.opts.max_retries => {
                    log::debug!("retrying after transient failure: {e}");
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    let delay = self.opts.backoff.saturating_mul(1u32 << attempt.min(16));
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

struct DocResult {
    doc: std::result::Result<Document, String>,
    records: Vec<TranslationRecord>,
    chunks: usize,
    max_chunk_tokens: usize,
}

fn translate_doc(doc: &Document, ctx: &Ctx<'_>) -> Result<DocResult> {
    let spans = split_document(doc);
    let chunked: Vec<_> = spans
        .iter()
        .map(|s| sentence_chunks(&s.text, ctx.tok, ctx.opts.max_tokens))
        .collect();
    let flat: Vec<String> = chunked.iter().flatten().map(|c| c.text.clone()).collect();
    let n_chunks = flat.len();
    let max_chunk_tokens = chunked.iter().flatten().map(|c| c.tokens).max().unwrap_or(0);

    let mut translated: Vec<String> = Vec::with_capacity(n_chunks);
    let mut failure = None;
    for batch in flat.chunks(ctx.desc.batch_size) {
        match ctx.call(&ctx.desc.request(batch.to_vec())) {
            Ok(out) => translated.extend(out),
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }

    if let Some(err) = failure {
        let records = spans
            .iter()
            .zip(&chunked)
            .map(|(s, cs)| TranslationRecord {
                doc_id: doc.id.clone(),
                paragraph_index: s.paragraph_index,
                sentence_index: s.index,
                source: s.text.clone(),
                output: String::new(),
                raw_output: None,
                chunks: cs.len(),
                truncated: false,
                repaired: false,
                status: RecordStatus::Failed,
                error: Some(err.clone()),
            })
            .collect();
        return Ok(DocResult {
            doc: Err(err),
            records,
            chunks: n_chunks,
            max_chunk_tokens,
        });
    }

    let mut outputs = translated.into_iter();
    let mut records = Vec::with_capacity(spans.len());
    for (span, chunks) in spans.iter().zip(&chunked) {
        let mut parts: Vec<(String, bool)> = Vec::with_capacity(chunks.len());
        let mut raw_parts: Vec<(String, bool)> = Vec::with_capacity(chunks.len());
        let (mut truncated, mut repaired_all) = (false, true);
        for c in chunks {
            let out = outputs.next().expect("one output per chunk");
            raw_parts.push((out.clone(), c.space_before));
            let mut text = out;
            if is_truncated(&text, ctx.tok, ctx.opts.max_tokens) {
                truncated = true;
                match ctx.repairer {
                    Some(r) => text.push_str(&r.complete(&text)?),
                    None => repaired_all = false,
                }
            }
            parts.push((text, c.space_before));
        }
        let raw = join_chunks(&raw_parts);
        let output = join_chunks(&parts);
        let repaired = truncated && repaired_all;
        let status = match (truncated, repaired) {
            (false, _) => RecordStatus::Ok,
            (true, true) => RecordStatus::Repaired,
            (true, false) => RecordStatus::Truncated,
        };
        records.push(TranslationRecord {
            doc_id: doc.id.clone(),
            paragraph_index: span.paragraph_index,
            sentence_index: span.index,
            source: span.text.clone(),
            raw_output: repaired.then_some(raw),
            output,
            chunks: chunks.len(),
            truncated,
            repaired,
            status,
            error: None,
        });
    }

    let joiner = sentence_joiner(&ctx.desc.tgt);
    let mut paragraphs: Vec<String> = vec![String::new(); doc.paragraphs.len()];
    for r in &records {
        let p = &mut paragraphs[r.paragraph_index];
        if r.sentence_index > 0 {
            p.push_str(joiner);
        }
        p.push_str(&r.output);
    }
    let any_repaired = records.iter().any(|r| r.repaired);
    let synthetic = Document::from_paragraphs(
        synthetic_id(&doc.id, ctx.desc.tgt.code()),
        ctx.desc.tgt.clone(),
        doc.url.clone(),
        &paragraphs,
        Provenance::synthetic(doc.lang.clone(), ctx.desc.model_id.clone(), any_repaired),
    );
    Ok(DocResult {
        doc: Ok(synthetic),
        records,
        chunks: n_chunks,
        max_chunk_tokens,
    })
}

/// Translates every document sentence by sentence and reassembles paragraphs
/// and documents. Output is in input order. A document whose requests still
/// fail after retries goes to `failed` and its sentences get failure records.
pub fn translate_corpus(
    manifest: &CorpusManifest,
    backend: &dyn MtBackend,
    desc: &MtBackendDescriptor,
    mt_tokenizer: &TokenizerModel,
    repairer: Option<&Repairer<'_>>,
    opts: &TranslateOptions,
) -> Result<TranslationOutcome> {
    desc.validate()?;
    manifest.require_before(Stage::Synthetic)?;
    if !manifest.lang.same_language(&desc.src) {
        return Err(Error::MixedLanguage {
            expected: desc.src.to_string(),
            found: manifest.lang.to_string(),
        });
    }
    let ctx = Ctx {
        backend,
        desc,
        tok: mt_tokenizer,
        repairer,
        opts,
        requests: AtomicU64::new(0),
        retries: AtomicU64::new(0),
    };
    let results: Vec<DocResult> = manifest
        .documents
        .par_iter()
        .map(|d| translate_doc(d, &ctx))
        .collect::<Result<_>>()?;

    let mut stats = TranslateStats {
        docs_in: manifest.len(),
        ..Default::default()
    };
    let mut docs = Vec::new();
    let mut failed = Vec::new();
    let mut records = Vec::new();
    for (src, r) in manifest.documents.iter().zip(results) {
        stats.chunks += r.chunks;
        stats.max_chunk_tokens = stats.max_chunk_tokens.max(r.max_chunk_tokens);
        stats.sentences += r.records.len();
        stats.truncated += r.records.iter().filter(|x| x.truncated).count();
        stats.repaired += r.records.iter().filter(|x| x.repaired).count();
        match r.doc {
            Ok(d) => docs.push(d),
            Err(e) => {
                log::warn!("document {} failed translation: {e}", src.id);
                failed.push(src.clone().dropped(DropReason::TranslationFailed));
            }
        }
        records.extend(r.records);
    }
    stats.docs_out = docs.len();
    stats.docs_failed = failed.len();
    stats.requests = ctx.requests.load(Ordering::Relaxed);
    stats.retries = ctx.retries.load(Ordering::Relaxed);

    let mut out = CorpusManifest::new(desc.tgt.clone(), Stage::Synthetic.as_str());
    out.created_at = manifest.created_at;
    out.documents = docs;
    Ok(TranslationOutcome {
        manifest: out,
        failed: manifest.derive(Stage::Synthetic.as_str(), failed),
        records,
        stats,
    })
}

/// Applies [`repair_truncated`] to every truncated, unrepaired record.
pub fn repair_records(records: Vec<TranslationRecord>, repairer: &Repairer<'_>) -> Result<Vec<TranslationRecord>> {
    records.into_iter().map(|r| repair_truncated(r, repairer)).collect()
}
