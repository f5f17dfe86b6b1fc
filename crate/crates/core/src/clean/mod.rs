//! Cleaning, language identification, toxicity filtering, URL and paragraph
//! deduplication, and corpus merging.

pub mod dedup;
pub mod lid;
pub mod normalize;
pub mod toxic;
pub mod urls;

pub use dedup::{dedup_paragraphs, merge_corpora, paragraph_hash, DedupLedger};
pub use lid::{lid_filter, lid_train, LidModel, Prediction};
pub use normalize::{normalize_bytes, normalize_text, Normalized};
pub use toxic::{toxicity_filter, ToxicWordList, ToxicityMode};
pub use urls::{dedup_urls, fetch_all, normalize_url, Fetched, Fetcher};

use crate::corpus::{CorpusManifest, Document, LanguageTag, Stage};

/// Result of a filtering stage: every input document lands in exactly one side.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub kept: CorpusManifest,
    pub dropped: CorpusManifest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub url: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleanStats {
    pub docs_in: usize,
    pub docs_out: usize,
    pub empty_after_clean: usize,
    pub duplicate_urls: usize,
    pub duplicate_ids: usize,
    pub replaced_invalid: usize,
}

/// Normalizes raw documents into a `clean` manifest. Documents with a URL
/// already seen (after URL normalization) or with empty cleaned text are
/// skipped and counted.
pub fn clean_documents(lang: &LanguageTag, raw: &[RawDocument]) -> (CorpusManifest, CleanStats) {
    use rayon::prelude::*;
    use std::collections::HashSet;

    let mut stats = CleanStats {
        docs_in: raw.len(),
        ..Default::default()
    };
    let mut seen_urls = HashSet::new();
    let unique: Vec<&RawDocument> = raw
        .iter()
        .filter(|r| match &r.url {
            Some(u) => {
                let fresh = seen_urls.insert(normalize_url(u));
                if !fresh {
                    stats.duplicate_urls += 1;
                }
                fresh
            }
            None => true,
        })
        .collect();
    let cleaned: Vec<Normalized> = unique.par_iter().map(|r| normalize_bytes(r.text.as_bytes())).collect();

    let mut ids = HashSet::new();
    let mut docs = Vec::new();
    for (r, n) in unique.into_iter().zip(cleaned) {
        stats.replaced_invalid += n.replaced;
        if n.text.is_empty() {
            stats.empty_after_clean += 1;
            continue;
        }
        let doc = Document::new(lang.clone(), r.url.clone(), n.text);
        if !ids.insert(doc.id.clone()) {
            stats.duplicate_ids += 1;
            continue;
        }
        docs.push(doc);
    }
    stats.docs_out = docs.len();
    let mut m = CorpusManifest::new(lang.clone(), Stage::Clean.as_str());
    m.documents = docs;
    (m, stats)
}
