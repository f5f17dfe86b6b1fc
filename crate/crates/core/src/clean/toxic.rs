use std::collections::{BTreeSet, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;

use super::Partition;
use crate::corpus::{CorpusManifest, DropReason, LanguageTag, Stage};
use crate::{Error, Result};

static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{L}\p{M}\p{N}]+").unwrap());

/// Letters, marks (Indic matras and viramas) and digits.
fn is_word_char(c: char) -> bool {
    let mut buf = [0u8; 4];
    WORD.is_match(c.encode_utf8(&mut buf))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToxicWordList {
    pub lang: LanguageTag,
    words: BTreeSet<String>,
}

impl ToxicWordList {
    pub fn new<I, S>(lang: LanguageTag, words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for w in words {
            let w = w.as_ref().trim();
            if w.is_empty() {
                return Err(Error::WordList("empty entry".into()));
            }
            if w.chars().any(char::is_whitespace) {
                return Err(Error::WordList(format!("entry {w:?} contains whitespace")));
            }
            set.insert(w.to_lowercase());
        }
        Ok(Self { lang, words: set })
    }

    /// One entry per line; blank lines and `#` comments are ignored.
    pub fn parse(lang: LanguageTag, text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        Self::new(lang, entries)
    }

    pub fn load(lang: LanguageTag, path: &Path) -> Result<Self> {
        Self::parse(lang, &std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    fn matcher(&self) -> Matcher<'_> {
        let (plain, punctuated): (Vec<&str>, Vec<&str>) = self
            .words()
            .partition(|w| WORD.find(w).is_some_and(|m| m.len() == w.len()));
        Matcher {
            plain: plain.into_iter().collect(),
            punctuated,
        }
    }
}

struct Matcher<'a> {
    plain: HashSet<&'a str>,
    punctuated: Vec<&'a str>,
}

impl Matcher<'_> {
    /// (whole-word matches, word count) in case-folded `text`.
    fn scan(&self, text: &str) -> (usize, usize) {
        let folded = text.to_lowercase();
        let mut words = 0;
        let mut hits = 0;
        for m in WORD.find_iter(&folded) {
            words += 1;
            if self.plain.contains(m.as_str()) {
                hits += 1;
            }
        }
        for entry in &self.punctuated {
            for (i, _) in folded.match_indices(entry) {
                let before = folded[..i].chars().next_back();
                let after = folded[i + entry.len()..].chars().next();
                let edge_ok = |c: Option<char>, inner: Option<char>| match (c, inner) {
                    (Some(c), Some(inner)) => !(is_word_char(c) && is_word_char(inner)),
                    _ => true,
                };
                if edge_ok(before, entry.chars().next()) && edge_ok(after, entry.chars().next_back()) {
                    hits += 1;
                }
            }
        }
        (hits, words)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToxicityMode {
    /// Drop on the first whole-word match.
    AnyMatch,
    /// Drop when matches / words exceeds the ratio.
    Ratio(f64),
}

pub fn toxicity_filter(manifest: &CorpusManifest, list: &ToxicWordList, mode: ToxicityMode) -> Result<Partition> {
    manifest.require_before(Stage::Toxicity)?;
    if !list.lang.same_language(&manifest.lang) {
        return Err(Error::MixedLanguage {
            expected: manifest.lang.to_string(),
            found: list.lang.to_string(),
        });
    }
    let matcher = list.matcher();
    let toxic: Vec<bool> = manifest
        .documents
        .par_iter()
        .map(|d| {
            let (hits, words) = matcher.scan(&d.text);
            match mode {
                ToxicityMode::AnyMatch => hits > 0,
                ToxicityMode::Ratio(r) => words > 0 && hits as f64 / words as f64 > r,
            }
        })
        .collect();

    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    for (doc, bad) in manifest.documents.iter().zip(toxic) {
        if bad {
            dropped.push(doc.clone().dropped(DropReason::Toxicity));
        } else {
            kept.push(doc.clone());
        }
    }
    Ok(Partition {
        kept: manifest.derive(Stage::Toxicity.as_str(), kept),
        dropped: manifest.derive(Stage::Toxicity.as_str(), dropped),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn en() -> LanguageTag {
        LanguageTag::new("en").unwrap()
    }

    fn corpus(texts: &[String]) -> CorpusManifest {
        let mut m = CorpusManifest::new(en(), "lid");
        m.documents = texts.iter().map(|t| Document::new(en(), None, t.clone())).collect();
        m
    }

    fn list(words: &[&str]) -> ToxicWordList {
        ToxicWordList::new(en(), words).unwrap()
    }

    #[test]
    fn whole_word_case_folded() {
        let l = list(&["badword"]);
        let p = toxicity_filter(
            &corpus(&["a badword b".into(), "abbadwordba".into(), "A BadWord!".into()]),
            &l,
            ToxicityMode::AnyMatch,
        )
        .unwrap();
        assert_eq!(p.kept.documents[0].text, "abbadwordba");
        assert_eq!(p.dropped.len(), 2);
        assert!(p.dropped.documents.iter().all(|d| d.drop_reason == Some(DropReason::Toxicity)));
    }

    #[test]
    fn devanagari_words_with_matras() {
        let hi = LanguageTag::new("hi").unwrap();
        let l = ToxicWordList::new(hi.clone(), ["गाली"]).unwrap();
        let mut m = CorpusManifest::new(hi.clone(), "lid");
        m.documents = vec![
            Document::new(hi.clone(), None, "यह गाली है".into()),
            Document::new(hi.clone(), None, "यह गालीयाँ है".into()),
        ];
        let p = toxicity_filter(&m, &l, ToxicityMode::AnyMatch).unwrap();
        assert_eq!(p.dropped.len(), 1);
        assert_eq!(p.kept.documents[0].text, "यह गालीयाँ है");
    }

    #[test]
    fn punctuated_entries() {
        let l = list(&["f*ck"]);
        let p = toxicity_filter(
            &corpus(&["oh f*ck no".into(), "xf*ckx".into()]),
            &l,
            ToxicityMode::AnyMatch,
        )
        .unwrap();
        assert_eq!(p.dropped.len(), 1);
        assert_eq!(p.kept.documents[0].text, "xf*ckx");
    }

    #[test]
    fn ratio_mode() {
        let l = list(&["bad"]);
        let m = corpus(&["bad good good good".into(), "bad bad good".into()]);
        let p = toxicity_filter(&m, &l, ToxicityMode::Ratio(0.3)).unwrap();
        assert_eq!(p.kept.len(), 1);
        assert_eq!(p.dropped.documents[0].text, "bad bad good");
    }

    #[test]
    fn list_parsing() {
        let l = ToxicWordList::parse(en(), "# comment\nBad\n\nworse\n").unwrap();
        assert_eq!(l.words().collect::<Vec<_>>(), ["bad", "worse"]);
        assert!(ToxicWordList::new(en(), ["two words"]).is_err());
        assert!(ToxicWordList::new(en(), [""]).is_err());
    }

    #[test]
    fn language_mismatch() {
        let hi = ToxicWordList::new(LanguageTag::new("hi").unwrap(), ["x"]).unwrap();
        assert!(toxicity_filter(&corpus(&["x".into()]), &hi, ToxicityMode::AnyMatch).is_err());
    }

    #[test]
    fn seeded_corpus_against_regex_scan() {
        let words = ["apple", "river", "stone", "cloud", "paper", "green", "badword", "nasty"];
        let toxic = list(&["badword", "nasty"]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut docs = Vec::new();
        let seeded: BTreeSet<usize> = [4, 17, 23, 41, 58, 77, 99].into();
        for i in 0..100 {
            let mut ws: Vec<String> = (0..12).map(|_| words[rng.random_range(0..6)].to_string()).collect();
            if seeded.contains(&i) {
                let pos = rng.random_range(0..ws.len());
                ws[pos] = words[6 + rng.random_range(0..2)].to_uppercase();
            } else if i % 5 == 0 {
                // Substring occurrences must not count.
                ws[0] = "xbadwordx".into();
            }
            docs.push(format!("doc {i}: {}.", ws.join(" ")));
        }
        let reference = Regex::new(r"(?i)(^|[^\p{L}\p{M}\p{N}])(badword|nasty)($|[^\p{L}\p{M}\p{N}])").unwrap();
        let expected: Vec<usize> = (0..100).filter(|&i| reference.is_match(&docs[i])).collect();
        assert_eq!(expected.len(), 7);
        let p = toxicity_filter(&corpus(&docs), &toxic, ToxicityMode::AnyMatch).unwrap();
        assert_eq!(p.dropped.len(), 7);
        assert_eq!(p.kept.len() + p.dropped.len(), 100);
        let dropped: Vec<&str> = p.dropped.documents.iter().map(|d| d.text.as_str()).collect();
        let want: Vec<&str> = expected.iter().map(|&i| docs[i].as_str()).collect();
        assert_eq!(dropped, want);
    }
}
