use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusManifest;
use crate::translate::split::split_sentences;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub count: u64,
    /// Multiplier on `count`; values above 1 upsample the language.
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub languages: BTreeMap<String, PlanEntry>,
}

impl SamplingPlan {
    pub fn uniform<S: Into<String>>(langs: impl IntoIterator<Item = S>, count: u64) -> Self {
        Self {
            languages: langs
                .into_iter()
                .map(|l| (l.into(), PlanEntry { count, weight: 1.0 }))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (lang, e) in &self.languages {
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(Error::Sampling(format!("weight for {lang} must be positive, got {}", e.weight)));
            }
        }
        Ok(())
    }

    fn target(&self, lang: &str) -> u64 {
        let e = &self.languages[lang];
        (e.count as f64 * e.weight).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledSentence {
    pub lang: String,
    pub text: String,
}

/// Every sentence of every paragraph, in manifest order.
pub fn manifest_sentences(manifest: &CorpusManifest) -> Vec<String> {
    manifest
        .documents
        .iter()
        .flat_map(|d| d.paragraph_texts().flat_map(|p| split_sentences(p, &d.lang)))
        .collect()
}

/// Draws the planned number of sentences per language in plan order. A
/// language with at least as many sentences as requested is sampled without
/// replacement; a smaller one is sampled with replacement.
pub fn sample_sentences(corpora: &BTreeMap<String, Vec<String>>, plan: &SamplingPlan, seed: u64) -> Result<Vec<SampledSentence>> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for lang in plan.languages.keys() {
        let want = plan.target(lang) as usize;
        if want == 0 {
            continue;
        }
        let pool = corpora
            .get(lang)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| Error::Sampling(format!("no sentences available for {lang}")))?;
        let picks: Vec<usize> = if want <= pool.len() {
            index::sample(&mut rng, pool.len(), want).into_vec()
        } else {
            (0..want).map(|_| rng.random_range(0..pool.len())).collect()
        };
        out.extend(picks.into_iter().map(|i| SampledSentence {
            lang: lang.clone(),
            text: pool[i].clone(),
        }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpora() -> BTreeMap<String, Vec<String>> {
        let mut c = BTreeMap::new();
        c.insert("en".into(), (0..50).map(|i| format!("en {i}")).collect());
        c.insert("gu".into(), (0..5).map(|i| format!("gu {i}")).collect());
        c
    }

    #[test]
    fn small_language_upsampled() {
        let plan = SamplingPlan::uniform(["en", "gu"], 20);
        let s = sample_sentences(&corpora(), &plan, 1).unwrap();
        let en: Vec<_> = s.iter().filter(|x| x.lang == "en").collect();
        let gu: Vec<_> = s.iter().filter(|x| x.lang == "gu").collect();
        assert_eq!((en.len(), gu.len()), (20, 20));
        let mut uniq: Vec<_> = en.iter().map(|x| &x.text).collect();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 20);
        assert!(gu.iter().all(|x| x.text.starts_with("gu ")));
    }

    #[test]
    fn zero_count_is_empty() {
        let plan = SamplingPlan::uniform(["x"], 0);
        assert!(sample_sentences(&BTreeMap::new(), &plan, 0).unwrap().is_empty());
    }

    #[test]
    fn deterministic() {
        let plan = SamplingPlan::uniform(["en", "gu"], 12);
        assert_eq!(
            sample_sentences(&corpora(), &plan, 7).unwrap(),
            sample_sentences(&corpora(), &plan, 7).unwrap()
        );
        assert_ne!(
            sample_sentences(&corpora(), &plan, 7).unwrap(),
            sample_sentences(&corpora(), &plan, 8).unwrap()
        );
    }

    #[test]
    fn missing_language_is_error() {
        let plan = SamplingPlan::uniform(["mr"], 3);
        assert!(matches!(sample_sentences(&corpora(), &plan, 0), Err(Error::Sampling(_))));
        let mut bad = SamplingPlan::uniform(["en"], 3);
        bad.languages.get_mut("en").unwrap().weight = 0.0;
        assert!(sample_sentences(&corpora(), &bad, 0).is_err());
    }

    #[test]
    fn weight_scales_count() {
        let mut plan = SamplingPlan::uniform(["gu"], 4);
        plan.languages.get_mut("gu").unwrap().weight = 2.5;
        assert_eq!(sample_sentences(&corpora(), &plan, 0).unwrap().len(), 10);
    }
}
