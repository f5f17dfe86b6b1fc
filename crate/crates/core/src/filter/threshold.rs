use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::score::ScoreLedger;
use crate::corpus::{CorpusManifest, Document, DropReason, Stage};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetUnit {
    #[default]
    Word,
    Bpe,
}

impl BudgetUnit {
    pub fn tokens(self, doc: &Document) -> Result<u64> {
        match self {
            BudgetUnit::Word => Ok(doc.word_tokens),
            BudgetUnit::Bpe => doc.bpe_tokens.ok_or_else(|| {
                Error::Filter(format!("document {} has no BPE token count", doc.id))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterThreshold {
    /// Perplexity of the last admitted document.
    pub value: f64,
    pub budget: u64,
    pub unit: BudgetUnit,
    pub kept_tokens: u64,
    pub kept_docs: usize,
    /// Set when the scorable corpus is smaller than the budget.
    pub shortfall: Option<u64>,
    /// Admitted ids in admission order (ascending perplexity).
    pub admitted: Vec<String>,
}

/// Sorts scorable documents by (perplexity, id) and admits the shortest
/// prefix whose token total reaches `budget`.
pub fn select_threshold(ledger: &ScoreLedger, manifest: &CorpusManifest, budget: u64, unit: BudgetUnit) -> Result<FilterThreshold> {
    if budget == 0 {
        return Err(Error::Filter("budget must be positive".into()));
    }
    let docs: HashMap<&str, &Document> = manifest.documents.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut ranked: Vec<(f64, &str, u64)> = Vec::new();
    for s in ledger.scorable() {
        let doc = docs
            .get(s.doc_id.as_str())
            .ok_or_else(|| Error::Filter(format!("ledger entry {} is not in the manifest", s.doc_id)))?;
        let ppl = s
            .ppl
            .filter(|p| p.is_finite() && *p > 0.0)
            .ok_or_else(|| Error::Filter(format!("document {} has no valid perplexity", s.doc_id)))?;
        ranked.push((ppl, s.doc_id.as_str(), unit.tokens(doc)?));
    }
    if ranked.is_empty() {
        return Err(Error::Filter("no scorable documents in the ledger".into()));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));

    let mut kept_tokens = 0u64;
    let mut admitted = Vec::new();
    let mut value = ranked[0].0;
    for &(ppl, id, tokens) in &ranked {
        if kept_tokens >= budget {
            break;
        }
        kept_tokens += tokens;
        admitted.push(id.to_string());
        value = ppl;
    }
    Ok(FilterThreshold {
        value,
        budget,
        unit,
        kept_tokens,
        kept_docs: admitted.len(),
        shortfall: (kept_tokens < budget).then(|| budget - kept_tokens),
        admitted,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: CorpusManifest,
    /// Scored above the threshold; each carries its perplexity.
    pub dropped: CorpusManifest,
    pub unscorable: CorpusManifest,
}

/// Splits `manifest` by the admitted set of `threshold`. Unscorable documents
/// are set aside unless `pass_unscorable` is true, in which case they are kept.
pub fn apply_filter(
    manifest: &CorpusManifest,
    ledger: &ScoreLedger,
    threshold: &FilterThreshold,
    pass_unscorable: bool,
) -> Result<FilterOutcome> {
    let scores = ledger.by_id();
    let admitted: HashSet<&str> = threshold.admitted.iter().map(String::as_str).collect();
    let (mut kept, mut dropped, mut unscorable) = (Vec::new(), Vec::new(), Vec::new());
    for doc in &manifest.documents {
        let score = scores
            .get(doc.id.as_str())
            .ok_or_else(|| Error::Filter(format!("no score for document {}", doc.id)))?;
        let mut d = doc.clone();
        d.ppl = score.ppl;
        if !score.scorable {
            if pass_unscorable {
                kept.push(d);
            } else {
                unscorable.push(d.dropped(DropReason::Unscorable));
            }
        } else if admitted.contains(doc.id.as_str()) {
            kept.push(d);
        } else {
            dropped.push(d.dropped(DropReason::Perplexity));
        }
    }
    let stage = Stage::Filtered.as_str();
    Ok(FilterOutcome {
        kept: manifest.derive(stage, kept),
        dropped: manifest.derive(stage, dropped),
        unscorable: manifest.derive(stage, unscorable),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LanguageTag, Provenance};
    use crate::filter::score::DocScore;
    use proptest::prelude::*;

    fn fixture(items: &[(f64, u64)]) -> (ScoreLedger, CorpusManifest) {
        let hi = LanguageTag::new("hi").unwrap();
        let mut m = CorpusManifest::new(hi.clone(), "synthetic");
        let mut entries = Vec::new();
        for (i, &(ppl, tokens)) in items.iter().enumerate() {
            let id = format!("{i:04}");
            let words: Vec<String> = (0..tokens).map(|_| "w".to_string()).collect();
            let prov = Provenance::synthetic(LanguageTag::new("en").unwrap(), "mt", false);
            m.documents.push(Document::from_paragraphs(id.clone(), hi.clone(), None, &[words.join(" ")], prov));
            entries.push(DocScore {
                doc_id: id,
                ppl: Some(ppl),
                tokens_scored: 5,
                s: 10,
                e: 1024,
                scorable: true,
            });
        }
        (
            ScoreLedger {
                checkpoint_id: "c".into(),
                s: 10,
                e: 1024,
                entries,
            },
            m,
        )
    }

    #[test]
    fn single_best_document() {
        let (l, m) = fixture(&[(5.0, 10), (2.0, 30), (9.0, 5)]);
        let t = select_threshold(&l, &m, 30, BudgetUnit::Word).unwrap();
        assert_eq!(t.admitted, ["0001"]);
        assert_eq!(t.value, 2.0);
        assert_eq!(t.shortfall, None);
    }

    #[test]
    fn shortfall_admits_everything() {
        let (l, m) = fixture(&[(5.0, 10), (2.0, 30)]);
        let t = select_threshold(&l, &m, 1000, BudgetUnit::Word).unwrap();
        assert_eq!(t.kept_docs, 2);
        assert_eq!(t.shortfall, Some(960));
        assert_eq!(t.value, 5.0);
    }

    #[test]
    fn ties_broken_by_id() {
        let (l, m) = fixture(&[(3.0, 10), (3.0, 10), (1.0, 1)]);
        let t = select_threshold(&l, &m, 5, BudgetUnit::Word).unwrap();
        assert_eq!(t.admitted, ["0002", "0000"]);
    }

    #[test]
    fn apply_partitions_and_records_ppl() {
        let (mut l, mut m) = fixture(&[(5.0, 10), (2.0, 30), (9.0, 5)]);
        let prov = m.documents[0].provenance.clone();
        m.documents.push(Document::from_paragraphs("short".into(), m.lang.clone(), None, &["w"], prov));
        l.entries.push(DocScore {
            doc_id: "short".into(),
            ppl: None,
            tokens_scored: 0,
            s: 10,
            e: 1024,
            scorable: false,
        });
        let t = select_threshold(&l, &m, 35, BudgetUnit::Word).unwrap();
        let out = apply_filter(&m, &l, &t, false).unwrap();
        assert_eq!(out.kept.ids().collect::<Vec<_>>(), ["0000", "0001"]);
        assert_eq!(out.dropped.documents[0].ppl, Some(9.0));
        assert_eq!(out.dropped.documents[0].drop_reason, Some(DropReason::Perplexity));
        assert_eq!(out.unscorable.len(), 1);
        let passed = apply_filter(&m, &l, &t, true).unwrap();
        assert_eq!(passed.kept.len(), 3);

        l.entries.pop();
        assert!(apply_filter(&m, &l, &t, false).is_err());
    }

    #[test]
    fn bpe_unit_needs_counts() {
        let (l, m) = fixture(&[(1.0, 3)]);
        assert!(select_threshold(&l, &m, 1, BudgetUnit::Bpe).is_err());
        assert!(select_threshold(&l, &m, 0, BudgetUnit::Word).is_err());
    }

    proptest! {
        #[test]
        fn budget_properties(items in prop::collection::vec((1.0f64..50.0, 1u64..40), 1..30), b1 in 1u64..400, b2 in 1u64..400) {
            let (l, m) = fixture(&items);
            let total: u64 = items.iter().map(|x| x.1).sum();
            let (lo, hi) = (b1.min(b2), b1.max(b2));
            let t_lo = select_threshold(&l, &m, lo, BudgetUnit::Word).unwrap();
            let t_hi = select_threshold(&l, &m, hi, BudgetUnit::Word).unwrap();
            for t in [&t_lo, &t_hi] {
                if total >= t.budget {
                    prop_assert!(t.kept_tokens >= t.budget);
                    let last = m.documents.iter().find(|d| d.id == *t.admitted.last().unwrap()).unwrap();
                    prop_assert!(t.kept_tokens - last.word_tokens < t.budget);
                } else {
                    prop_assert_eq!(t.kept_docs, items.len());
                }
            }
            let hi_set: HashSet<&String> = t_hi.admitted.iter().collect();
            prop_assert!(t_lo.admitted.iter().all(|id| hi_set.contains(id)));
        }
    }
}
