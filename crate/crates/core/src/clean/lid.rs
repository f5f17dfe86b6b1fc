//! Character n-gram naive Bayes language identifier.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Partition;
use crate::corpus::{CorpusManifest, DropReason, LanguageTag, Stage};
use crate::{Error, Result};

pub const LID_FORMAT: &str = "monoforge-lid";
pub const LID_VERSION: u32 = 1;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_MIN_CONF: f64 = 0.7;
pub const MIN_TRAIN_CHARS: usize = 200;
const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidProfile {
    /// Smoothed log-probability of every n-gram seen for this language.
    pub log_probs: BTreeMap<String, f64>,
    /// Log-probability assigned to n-grams never seen for this language.
    pub unseen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidModel {
    pub format: String,
    pub version: u32,
    pub max_order: usize,
    pub alpha: f64,
    pub languages: Vec<String>,
    pub profiles: BTreeMap<String, LidProfile>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub lang: String,
    /// Posterior probability of `lang`.
    pub confidence: f64,
}

fn ngrams(text: &str, max_order: usize) -> HashMap<String, u32> {
    let mut padded: Vec<char> = vec![' '];
    for w in text.split_whitespace() {
        padded.extend(w.chars().flat_map(char::to_lowercase));
        padded.push(' ');
    }
    let mut counts = HashMap::new();
    for n in 1..=max_order {
        for win in padded.windows(n) {
            if win.iter().all(|&c| c == ' ') {
                continue;
            }
            *counts.entry(win.iter().collect::<String>()).or_insert(0) += 1;
        }
    }
    counts
}

/// Trains one profile per language with add-`alpha` smoothing over the
/// shared n-gram vocabulary.
pub fn lid_train(samples: &BTreeMap<LanguageTag, Vec<String>>, alpha: f64) -> Result<LidModel> {
    if samples.is_empty() {
        return Err(Error::Lid("no languages to train on".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::Lid(format!("smoothing constant must be positive, got {alpha}")));
    }
    let mut counts: BTreeMap<String, HashMap<String, u64>> = BTreeMap::new();
    let mut vocab: BTreeSet<&str> = BTreeSet::new();
    for (lang, texts) in samples {
        let chars: usize = texts.iter().map(|t| t.chars().count()).sum();
        if chars < MIN_TRAIN_CHARS {
            return Err(Error::Lid(format!(
                "language {lang} has {chars} characters of training text, need at least {MIN_TRAIN_CHARS}"
            )));
        }
        let entry = counts.entry(lang.code().to_string()).or_default();
        for t in texts {
            for (g, c) in ngrams(t, MAX_ORDER) {
                *entry.entry(g).or_insert(0) += c as u64;
            }
        }
    }
    for c in counts.values() {
        vocab.extend(c.keys().map(String::as_str));
    }
    let denom_extra = alpha * (vocab.len() as f64 + 1.0);

    let profiles = counts
        .iter()
        .map(|(lang, grams)| {
            let total: u64 = grams.values().sum();
            let denom = (total as f64 + denom_extra).ln();
            let log_probs = grams
                .iter()
                .map(|(g, &c)| (g.clone(), (c as f64 + alpha).ln() - denom))
                .collect();
            let profile = LidProfile {
                log_probs,
                unseen: alpha.ln() - denom,
            };
            (lang.clone(), profile)
        })
        .collect();

    Ok(LidModel {
        format: LID_FORMAT.into(),
        version: LID_VERSION,
        max_order: MAX_ORDER,
        alpha,
        languages: counts.keys().cloned().collect(),
        profiles,
    })
}

impl LidModel {
    pub fn covers(&self, lang: &LanguageTag) -> bool {
        self.profiles.contains_key(lang.code())
    }

    /// Posterior over all languages, in `languages` order.
    pub fn posterior(&self, text: &str) -> Result<Vec<(String, f64)>> {
        if text.trim().is_empty() {
            return Err(Error::Lid("cannot classify empty text".into()));
        }
        let grams = ngrams(text, self.max_order);
        let scores: Vec<f64> = self
            .languages
            .iter()
            .map(|l| {
                let p = &self.profiles[l];
                grams
                    .iter()
                    .map(|(g, &c)| c as f64 * p.log_probs.get(g).copied().unwrap_or(p.unseen))
                    .sum()
            })
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        Ok(self
            .languages
            .iter()
            .zip(&scores)
            .map(|(l, s)| (l.clone(), (s - max).exp() / z))
            .collect())
    }

    /// Most probable language. Ties go to the language listed first.
    pub fn classify(&self, text: &str) -> Result<Prediction> {
        let post = self.posterior(text)?;
        let (lang, confidence) = post
            .into_iter()
            .fold(None::<(String, f64)>, |best, (l, p)| match best {
                Some((bl, bp)) if bp >= p => Some((bl, bp)),
                _ => Some((l, p)),
            })
            .expect("model has at least one language");
        Ok(Prediction { lang, confidence })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: LidModel = serde_json::from_slice(&std::fs::read(path)?)?;
        if model.format != LID_FORMAT || model.version != LID_VERSION {
            return Err(Error::Lid(format!(
                "unsupported model file {} v{}",
                model.format, model.version
            )));
        }
        if let Some(l) = model.languages.iter().find(|l| !model.profiles.contains_key(*l)) {
            return Err(Error::Lid(format!("language {l} has no profile")));
        }
        Ok(model)
    }
}

/// Keeps documents whose most probable language is `target` with posterior
/// at least `min_conf`. Dropped documents carry the predicted language.
pub fn lid_filter(manifest: &CorpusManifest, model: &LidModel, target: &LanguageTag, min_conf: f64) -> Result<Partition> {
    manifest.require_before(Stage::Lid)?;
    if !model.covers(target) {
        return Err(Error::Lid(format!("model has no profile for target language {target}")));
    }
    let verdicts: Vec<Option<Prediction>> = manifest
        .documents
        .par_iter()
        .map(|d| model.classify(&d.text).ok())
        .collect();

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (doc, pred) in manifest.documents.iter().zip(verdicts) {
        match pred {
            Some(p) if p.lang == target.code() && p.confidence >= min_conf => kept.push(doc.clone()),
            p => {
                let mut d = doc.clone().dropped(DropReason::Lid);
                d.predicted_lang = p.map(|p| p.lang);
                dropped.push(d);
            }
        }
    }
    Ok(Partition {
        kept: manifest.derive(Stage::Lid.as_str(), kept),
        dropped: manifest.derive(Stage::Lid.as_str(), dropped),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    const EN: &[&str] = &[
        "The committee met on Tuesday to discuss the new budget for the library.",
        "Children were playing in the park while their parents talked about the weather.",
        "She bought fresh vegetables at the market and cooked dinner for the whole family.",
        "Scientists have found that regular exercise improves memory and concentration.",
    ];
    const HI: &[&str] = &[
        "समिति ने पुस्तकालय के नए बजट पर चर्चा करने के लिए मंगलवार को बैठक की।",
        "बच्चे पार्क में खेल रहे थे जबकि उनके माता-पिता मौसम के बारे में बात कर रहे थे।",
        "उसने बाजार से ताज़ी सब्ज़ियाँ खरीदीं और पूरे परिवार के लिए खाना बनाया।",
        "वैज्ञानिकों ने पाया है कि नियमित व्यायाम से स्मृति और एकाग्रता में सुधार होता है।",
    ];

    fn tag(s: &str) -> LanguageTag {
        LanguageTag::new(s).unwrap()
    }

    fn model() -> LidModel {
        let mut samples = BTreeMap::new();
        samples.insert(tag("en"), EN.iter().map(|s| s.to_string()).collect());
        samples.insert(tag("hi"), HI.iter().map(|s| s.to_string()).collect());
        lid_train(&samples, DEFAULT_ALPHA).unwrap()
    }

    fn devanagari_share(s: &str) -> f64 {
        let letters: Vec<char> = s.chars().filter(|c| c.is_alphabetic()).collect();
        letters.iter().filter(|&&c| ('\u{0900}'..='\u{097F}').contains(&c)).count() as f64 / letters.len() as f64
    }

    #[test]
    fn resubstitution() {
        let m = model();
        for s in EN {
            assert_eq!(m.classify(s).unwrap().lang, "en");
        }
        for s in HI {
            assert_eq!(m.classify(s).unwrap().lang, "hi");
        }
    }

    #[test]
    fn held_out_devanagari() {
        let s = "आज सुबह बारिश हुई और सड़कें गीली हो गईं।";
        assert!(devanagari_share(s) > 0.9);
        let p = model().classify(s).unwrap();
        assert_eq!(p.lang, "hi");
        assert!(p.confidence > 0.99);
    }

    #[test]
    fn empty_text_is_error() {
        assert!(model().classify("").is_err());
        assert!(model().classify(" \n ").is_err());
    }

    #[test]
    fn insufficient_data() {
        let mut samples = BTreeMap::new();
        samples.insert(tag("en"), vec!["too short".to_string()]);
        assert!(matches!(lid_train(&samples, 0.5), Err(Error::Lid(_))));
    }

    #[test]
    fn posterior_sums_to_one() {
        let post = model().posterior("mixed text मिश्रित").unwrap();
        assert!((post.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn corpus(texts: &[&str]) -> CorpusManifest {
        let mut m = CorpusManifest::new(tag("hi"), "clean");
        m.documents = texts.iter().map(|t| Document::new(tag("hi"), None, t.to_string())).collect();
        m
    }

    #[test]
    fn filter_partitions() {
        let m = model();
        let pure = corpus(&HI[..3]);
        let p = lid_filter(&pure, &m, &tag("hi"), DEFAULT_MIN_CONF).unwrap();
        assert_eq!(p.kept.len(), 3);
        assert!(p.dropped.is_empty());

        let mixed = corpus(&[HI[0], "The weather was lovely and everyone went outside to play.", HI[2]]);
        let p = lid_filter(&mixed, &m, &tag("hi"), DEFAULT_MIN_CONF).unwrap();
        assert_eq!(p.kept.len(), 2);
        assert_eq!(p.dropped.len(), 1);
        let d = &p.dropped.documents[0];
        assert_eq!(d.drop_reason, Some(DropReason::Lid));
        assert_eq!(d.predicted_lang.as_deref(), Some("en"));
        assert!(devanagari_share(&d.text) < 0.1);

        let p = lid_filter(&mixed, &m, &tag("hi"), 1.01).unwrap();
        assert!(p.kept.is_empty());
        assert_eq!(p.dropped.len(), 3);
    }

    #[test]
    fn uncovered_target_and_stage() {
        let m = model();
        assert!(lid_filter(&corpus(HI), &m, &tag("gu"), 0.7).is_err());
        let mut late = corpus(HI);
        late.stage = "merged".into();
        assert!(matches!(lid_filter(&late, &m, &tag("hi"), 0.7), Err(Error::StageOrder { .. })));
    }

    #[test]
    fn save_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lid.json");
        let m = model();
        m.save(&path).unwrap();
        assert_eq!(LidModel::load(&path).unwrap(), m);
    }
}
