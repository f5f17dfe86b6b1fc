//! Rule-based sentence splitting with nonbreaking prefixes, in the manner of
//! the Moses splitter.

use std::collections::HashSet;

use crate::corpus::{Document, LanguageTag};

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '»', '”', '’'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '{', '«', '“', '‘', '¿', '¡'];

const EN_PREFIXES: &[&str] = &[
    "Mr", "Mrs", "Ms", "Dr", "Prof", "Sr", "Jr", "St", "Mt", "vs", "etc", "Inc", "Ltd", "Co", "Corp", "Gen",
    "Gov", "Sen", "Rep", "Capt", "Col", "Lt", "Sgt", "Rev", "Hon", "Jan", "Feb", "Mar", "Apr", "Jun", "Jul",
    "Aug", "Sep", "Sept", "Oct", "Nov", "Dec", "approx", "dept", "est", "fig", "Fig", "vol", "Vol", "cf", "al",
];
const EN_NUMERIC_ONLY: &[&str] = &["No", "Nos", "Art", "pp", "p", "nr"];
const DEVANAGARI_PREFIXES: &[&str] = &["डॉ", "श्री", "श्रीमती", "सुश्री", "प्रो", "कु", "सं", "पृ", "ई", "मि"];
const GUJARATI_PREFIXES: &[&str] = &["ડૉ", "શ્રી", "શ્રીમતી", "પ્રો"];

/// Abbreviations after which a period does not end a sentence. Entries in
/// `numeric_only` protect the period only when a number follows.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NonbreakingPrefixes {
    plain: HashSet<String>,
    numeric_only: HashSet<String>,
}

impl NonbreakingPrefixes {
    /// Built-in list: the English abbreviations (common in every script) plus
    /// the language's own.
    pub fn for_lang(lang: &LanguageTag) -> Self {
        let mut p = Self::default();
        p.plain.extend(EN_PREFIXES.iter().map(|s| s.to_string()));
        p.numeric_only.extend(EN_NUMERIC_ONLY.iter().map(|s| s.to_string()));
        let extra: &[&str] = match lang.code() {
            "hi" | "mr" | "ne" | "sa" | "mai" | "kok" | "doi" | "brx" => DEVANAGARI_PREFIXES,
            "gu" => GUJARATI_PREFIXES,
            _ => &[],
        };
        p.plain.extend(extra.iter().map(|s| s.to_string()));
        p
    }

    /// Moses prefix-file format: one prefix per line, `#` comments, and a
    /// trailing `#NUMERIC_ONLY#` marker for numeric-only entries.
    pub fn parse(text: &str) -> Self {
        let mut p = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('#') {
                Some((w, tag)) if tag.contains("NUMERIC_ONLY") => {
                    p.numeric_only.insert(w.trim().to_string());
                }
                Some((w, _)) => {
                    p.plain.insert(w.trim().to_string());
                }
                None => {
                    p.plain.insert(line.to_string());
                }
            }
        }
        p
    }

    pub fn insert(&mut self, prefix: &str) {
        self.plain.insert(prefix.to_string());
    }
}

/// Separator used when sentences are joined back into a paragraph.
pub fn sentence_joiner(lang: &LanguageTag) -> &'static str {
    match lang.code() {
        "zh" | "ja" => "",
        _ => " ",
    }
}

fn starts_sentence(next: &str) -> bool {
    match next.trim_start_matches(OPENERS).chars().next() {
        Some(c) => c.is_uppercase() || c.is_numeric() || (c.is_alphabetic() && !c.is_lowercase()),
        None => !next.is_empty(),
    }
}

fn is_abbreviation_chain(stem: &str) -> bool {
    stem.contains('.')
        && stem
            .split('.')
            .all(|seg| !seg.is_empty() && seg.chars().count() <= 2 && seg.chars().all(char::is_alphabetic))
}

fn ends_sentence(word: &str, next: &str, prefixes: &NonbreakingPrefixes) -> bool {
    let core = word.trim_end_matches(CLOSERS);
    match core.chars().next_back() {
        Some('।' | '॥' | '。' | '！' | '？') => true,
        Some('?' | '!') => starts_sentence(next),
        Some('.') => {
            let stem = core.trim_end_matches('.').trim_start_matches(OPENERS);
            if stem.is_empty() || core.ends_with("..") {
                return starts_sentence(next);
            }
            if is_abbreviation_chain(stem) || prefixes.plain.contains(stem) {
                return false;
            }
            if prefixes.numeric_only.contains(stem) && next.chars().next().is_some_and(|c| c.is_numeric()) {
                return false;
            }
            let mut cs = stem.chars();
            if let (Some(c), None) = (cs.next(), cs.next()) {
                if c.is_uppercase() {
                    return false;
                }
            }
            starts_sentence(next)
        }
        _ => false,
    }
}

/// Splits with explicit prefixes. Sentences are rejoined from
/// whitespace-separated words with single spaces.
pub fn split_with(paragraph: &str, prefixes: &NonbreakingPrefixes) -> Vec<String> {
    let words: Vec<&str> = paragraph.split_whitespace().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..words.len() {
        let last = i + 1 == words.len();
        if last || ends_sentence(words[i], words[i + 1], prefixes) {
            out.push(words[start..=i].join(" "));
            start = i + 1;
        }
    }
    out
}

pub fn split_sentences(paragraph: &str, lang: &LanguageTag) -> Vec<String> {
    split_with(paragraph, &NonbreakingPrefixes::for_lang(lang))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSpan {
    pub doc_id: String,
    pub paragraph_index: usize,
    /// Position within the paragraph.
    pub index: usize,
    pub text: String,
}

pub fn split_document(doc: &Document) -> Vec<SentenceSpan> {
    let prefixes = NonbreakingPrefixes::for_lang(&doc.lang);
    doc.paragraph_texts()
        .enumerate()
        .flat_map(|(pi, p)| {
            split_with(p, &prefixes)
                .into_iter()
                .enumerate()
                .map(move |(si, text)| SentenceSpan {
                    doc_id: doc.id.clone(),
                    paragraph_index: pi,
                    index: si,
                    text,
                })
        })
        .collect()
}
