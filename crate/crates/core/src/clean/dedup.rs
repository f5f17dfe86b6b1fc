//! Exact paragraph deduplication on 128-bit hashes.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Partition;
use crate::corpus::{CorpusManifest, Document, DropReason, Stage};
use crate::hash::murmur3_128;
use crate::{Error, Result};

pub fn paragraph_hash(paragraph: &str) -> u128 {
    murmur3_128(paragraph.trim().as_bytes(), 0)
}

/// Hashes of every paragraph kept so far. `kept` always equals `seen.len()`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DedupLedger {
    seen: HashSet<u128>,
    kept: u64,
    dropped: u64,
}

#[derive(Serialize, Deserialize)]
struct LedgerFile {
    kept: u64,
    dropped: u64,
    seen: Vec<String>,
}

impl DedupLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn kept(&self) -> u64 {
        self.kept
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn contains(&self, hash: u128) -> bool {
        self.seen.contains(&hash)
    }

    /// Records `hash`; returns false if it was already present.
    pub fn admit(&mut self, hash: u128) -> bool {
        if self.seen.insert(hash) {
            self.kept += 1;
            true
        } else {
            self.dropped += 1;
            false
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut seen: Vec<u128> = self.seen.iter().copied().collect();
        seen.sort_unstable();
        let file = LedgerFile {
            kept: self.kept,
            dropped: self.dropped,
            seen: seen.into_iter().map(crate::hash::hex128).collect(),
        };
        std::fs::write(path, serde_json::to_vec(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: LedgerFile = serde_json::from_slice(&std::fs::read(path)?)?;
        let mut seen = HashSet::with_capacity(file.seen.len());
        for h in &file.seen {
            let v = u128::from_str_radix(h, 16).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: 1,
                reason: format!("bad hash {h:?}: {e}"),
            })?;
            seen.insert(v);
        }
        if seen.len() as u64 != file.kept {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                reason: format!("ledger lists {} hashes but kept={}", seen.len(), file.kept),
            });
        }
        Ok(Self {
            seen,
            kept: file.kept,
            dropped: file.dropped,
        })
    }
}

fn dedup_docs<'a>(
    docs: impl Iterator<Item = &'a Document>,
    ledger: &mut DedupLedger,
    unique_ids: bool,
) -> (Vec<Document>, Vec<Document>) {
    let docs: Vec<&Document> = docs.collect();
    // Hashing is parallel; keep/drop decisions are made in manifest order.
    let hashes: Vec<Vec<u128>> = docs
        .par_iter()
        .map(|d| d.paragraph_texts().map(paragraph_hash).collect())
        .collect();

    let mut ids: HashSet<&str> = HashSet::new();
    let mut kept = Vec::with_capacity(docs.len());
    let mut dropped = Vec::new();
    for (doc, hs) in docs.into_iter().zip(hashes) {
        if unique_ids && ids.contains(doc.id.as_str()) {
            dropped.push(doc.clone().dropped(DropReason::DuplicateId));
            continue;
        }
        let mut survivors = Vec::with_capacity(hs.len());
        let mut changed = false;
        for (p, h) in doc.paragraph_texts().zip(hs) {
            if p.trim().is_empty() {
                changed = true;
            } else if ledger.admit(h) {
                survivors.push(p);
            } else {
                changed = true;
            }
        }
        if survivors.is_empty() {
            dropped.push(doc.clone().dropped(DropReason::DedupEmpty));
        } else {
            ids.insert(doc.id.as_str());
            kept.push(if changed { doc.rebuild(&survivors) } else { doc.clone() });
        }
    }
    (kept, dropped)
}

/// Removes every paragraph whose trimmed bytes were seen earlier in the
/// manifest or recorded in `ledger`; documents left empty are dropped.
pub fn dedup_paragraphs(manifest: &CorpusManifest, ledger: &mut DedupLedger) -> Result<Partition> {
    manifest.require_before(Stage::Dedup)?;
    let (kept, dropped) = dedup_docs(manifest.documents.iter(), ledger, false);
    Ok(Partition {
        kept: manifest.derive(Stage::Dedup.as_str(), kept),
        dropped: manifest.derive(Stage::Dedup.as_str(), dropped),
    })
}

/// Concatenates in argument order and deduplicates with a fresh ledger.
/// A document whose id was already kept from an earlier input is dropped.
pub fn merge_corpora(manifests: &[CorpusManifest]) -> Result<Partition> {
    let first = manifests
        .first()
        .ok_or_else(|| Error::Config("merge needs at least one manifest".into()))?;
    for m in manifests {
        m.require_before(Stage::Merged)?;
        if !m.lang.same_language(&first.lang) {
            return Err(Error::MixedLanguage {
                expected: first.lang.to_string(),
                found: m.lang.to_string(),
            });
        }
    }
    let mut ledger = DedupLedger::new();
    let (kept, dropped) = dedup_docs(manifests.iter().flat_map(|m| m.documents.iter()), &mut ledger, true);
    Ok(Partition {
        kept: first.derive(Stage::Merged.as_str(), kept),
        dropped: first.derive(Stage::Merged.as_str(), dropped),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LanguageTag, Provenance};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hi() -> LanguageTag {
        LanguageTag::new("hi").unwrap()
    }

    fn manifest(docs: &[Vec<String>]) -> CorpusManifest {
        let mut m = CorpusManifest::new(hi(), "toxicity");
        m.documents = docs
            .iter()
            .enumerate()
            .map(|(i, ps)| Document::from_paragraphs(format!("{i:032x}"), hi(), None, ps, Provenance::clean()))
            .collect();
        m
    }

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn repeated_paragraph_removed_from_later_doc() {
        let m = manifest(&[strs(&["alpha", "beta"]), strs(&["gamma", "alpha"]), strs(&[" beta "])]);
        let mut ledger = DedupLedger::new();
        let p = dedup_paragraphs(&m, &mut ledger).unwrap();
        assert_eq!(p.kept.len(), 2);
        assert_eq!(p.kept.documents[1].text, "gamma");
        assert_eq!(p.kept.documents[1].id, m.documents[1].id);
        assert_eq!(p.dropped.documents[0].drop_reason, Some(DropReason::DedupEmpty));
        assert_eq!(ledger.kept(), 3);
        assert_eq!(ledger.dropped(), 2);
        p.kept.validate().unwrap();
    }

    #[test]
    fn idempotent_with_fresh_ledger() {
        let m = manifest(&[strs(&["a", "b", "a"]), strs(&["b", "c"]), strs(&["c"])]);
        let once = dedup_paragraphs(&m, &mut DedupLedger::new()).unwrap().kept;
        let mut again_in = once.clone();
        again_in.stage = "toxicity".into();
        let twice = dedup_paragraphs(&again_in, &mut DedupLedger::new()).unwrap().kept;
        assert_eq!(once.documents, twice.documents);
    }

    #[test]
    fn persisted_ledger_drops_everything_seen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.json");
        let m = manifest(&[strs(&["a", "b"]), strs(&["c"])]);
        let mut ledger = DedupLedger::new();
        dedup_paragraphs(&m, &mut ledger).unwrap();
        ledger.save(&path).unwrap();
        let mut loaded = DedupLedger::load(&path).unwrap();
        assert_eq!(loaded, ledger);
        let p = dedup_paragraphs(&m, &mut loaded).unwrap();
        assert!(p.kept.is_empty());
        assert_eq!(p.dropped.len(), 2);
    }

    #[test]
    fn injected_duplicates_match_exact_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut paras: Vec<String> = (0..900).map(|i| format!("paragraph {i} {}", rng.random::<u32>())).collect();
        let dups: Vec<String> = (0..100).map(|_| paras[rng.random_range(0..900)].clone()).collect();
        paras.extend(dups);
        paras.shuffle(&mut rng);
        let docs: Vec<Vec<String>> = paras.chunks(5).map(|c| c.to_vec()).collect();
        let m = manifest(&docs);

        let mut exact = HashSet::new();
        let expected_removed = paras.iter().filter(|p| !exact.insert(p.trim().to_string())).count();
        assert_eq!(expected_removed, 100);

        let mut ledger = DedupLedger::new();
        let p = dedup_paragraphs(&m, &mut ledger).unwrap();
        let kept_paras: usize = p.kept.documents.iter().map(|d| d.paragraphs.len()).sum();
        assert_eq!(kept_paras, 900);
        assert_eq!(ledger.dropped(), 100);
    }

    #[test]
    fn merge_semantics() {
        let a = manifest(&[strs(&["a1", "a2"]), strs(&["a3"])]);
        let mut b = manifest(&[strs(&["b1"]), strs(&["b2", "a2"])]);
        for (i, d) in b.documents.iter_mut().enumerate() {
            d.id = format!("b{i:031x}");
        }
        let self_merge = merge_corpora(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(self_merge.kept.documents, a.documents);
        assert_eq!(self_merge.kept.stage, "merged");

        let ab = merge_corpora(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(ab.kept.len(), 4);
        assert_eq!(ab.kept.documents[3].text, "b2");

        let mut en = b.clone();
        en.lang = LanguageTag::new("en").unwrap();
        assert!(matches!(merge_corpora(&[a, en]), Err(Error::MixedLanguage { .. })));
    }

    #[test]
    fn merge_with_cross_overlap_first_source_wins() {
        let a_paras: Vec<String> = (0..100).map(|i| format!("shared or a {i}")).collect();
        let mut b_paras: Vec<String> = (0..100).map(|i| format!("only b {i}")).collect();
        for i in 0..30 {
            b_paras[i * 3] = a_paras[i * 2].clone();
        }
        let a = manifest(&a_paras.chunks(4).map(|c| c.to_vec()).collect::<Vec<_>>());
        let mut b = manifest(&b_paras.chunks(4).map(|c| c.to_vec()).collect::<Vec<_>>());
        for d in &mut b.documents {
            d.id = format!("b{}", &d.id[1..]);
        }
        let merged = merge_corpora(&[a.clone(), b]).unwrap().kept;
        let kept_paras: Vec<&str> = merged.documents.iter().flat_map(|d| d.paragraph_texts()).collect();
        assert_eq!(kept_paras.len(), 170);
        assert_eq!(&merged.documents[..a.len()], &a.documents[..]);
    }

    proptest! {
        #[test]
        fn output_is_duplicate_free(docs in prop::collection::vec(prop::collection::vec("[abc]{1,2}", 1..4), 0..12)) {
            let m = manifest(&docs);
            let p = dedup_paragraphs(&m, &mut DedupLedger::new()).unwrap();
            let mut seen = HashSet::new();
            for para in p.kept.documents.iter().flat_map(|d| d.paragraph_texts()) {
                prop_assert!(seen.insert(para.trim().to_string()));
            }
            prop_assert_eq!(p.kept.len() + p.dropped.len(), m.len());
        }
    }
}
