//! Byte-pair encoding with a SentencePiece-style word-start marker.
//!
//! Spaces become `▁` and every `▁` starts a new pre-token, so merges never
//! cross word boundaries and decoding is an exact inverse. Other whitespace
//! characters are isolated as single-character pre-tokens. A literal `▁` in
//! the input is routed through byte fallback so it cannot be confused with a
//! space.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const META: char = '\u{2581}';
pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const SEP: u32 = 4;
pub const SPECIALS: [&str; 5] = ["<pad>", "<s>", "</s>", "<unk>", "<sep>"];
pub const NUM_SPECIALS: u32 = SPECIALS.len() as u32;
const BYTE_TOKENS: u32 = 256;

pub const MODEL_FORMAT: &str = "monoforge-bpe";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
enum PreToken<'a> {
    Text(String),
    /// A literal marker character in the input; always byte-encoded.
    Raw(&'a str),
}

fn pre_tokenize(text: &str) -> Vec<PreToken<'_>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, c) in text.char_indices() {
        match c {
            ' ' => {
                if !cur.is_empty() {
                    out.push(PreToken::Text(std::mem::take(&mut cur)));
                }
                cur.push(META);
            }
            META => {
                if !cur.is_empty() {
                    out.push(PreToken::Text(std::mem::take(&mut cur)));
                }
                out.push(PreToken::Raw(&text[i..i + c.len_utf8()]));
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(PreToken::Text(std::mem::take(&mut cur)));
                }
                out.push(PreToken::Text(c.to_string()));
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(PreToken::Text(cur));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    byte_fallback: bool,
    specials: Vec<String>,
    vocab: Vec<String>,
    merges: Vec<[u32; 2]>,
}

/// Vocabulary layout: specials, then (with fallback) 256 byte tokens, then
/// base characters by descending frequency, then one entry per merge in
/// learned order.
#[derive(Debug, Clone)]
pub struct TokenizerModel {
    vocab: Vec<String>,
    merges: Vec<(u32, u32)>,
    byte_fallback: bool,
    base_len: u32,
    char_ids: HashMap<char, u32>,
    ranks: HashMap<(u32, u32), u32>,
}

impl PartialEq for TokenizerModel {
    fn eq(&self, other: &Self) -> bool {
        self.vocab == other.vocab && self.merges == other.merges && self.byte_fallback == other.byte_fallback
    }
}

fn byte_token(b: u8) -> String {
    format!("<0x{b:02X}>")
}

impl TokenizerModel {
    fn assemble(vocab: Vec<String>, merges: Vec<(u32, u32)>, byte_fallback: bool) -> Result<Self> {
        let first_char = NUM_SPECIALS + if byte_fallback { BYTE_TOKENS } else { 0 };
        if vocab.len() < first_char as usize + merges.len() {
            return Err(Error::Tokenizer("vocabulary shorter than its fixed entries".into()));
        }
        let base_len = (vocab.len() - merges.len()) as u32;
        for (i, s) in SPECIALS.iter().enumerate() {
            if vocab[i] != *s {
                return Err(Error::Tokenizer(format!("special token {i} is {:?}, expected {s:?}", vocab[i])));
            }
        }
        if byte_fallback {
            for b in 0..=255u8 {
                if vocab[(NUM_SPECIALS + b as u32) as usize] != byte_token(b) {
                    return Err(Error::Tokenizer(format!("byte token {b:#04x} out of place")));
                }
            }
        }
        let mut char_ids = HashMap::new();
        for id in first_char..base_len {
            let mut cs = vocab[id as usize].chars();
            match (cs.next(), cs.next()) {
                (Some(c), None) if char_ids.insert(c, id).is_none() => {}
                _ => return Err(Error::Tokenizer(format!("base entry {id} is not a unique single character"))),
            }
        }
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, &(a, b)) in merges.iter().enumerate() {
            let id = base_len + rank as u32;
            if a >= id || b >= id || a < first_char || b < first_char {
                return Err(Error::Tokenizer(format!("merge {rank} refers to invalid ids ({a}, {b})")));
            }
            let joined = format!("{}{}", vocab[a as usize], vocab[b as usize]);
            if vocab[id as usize] != joined {
                return Err(Error::Tokenizer(format!("merge {rank} does not produce vocab entry {id}")));
            }
            ranks.insert((a, b), rank as u32);
        }
        Ok(Self {
            vocab,
            merges,
            byte_fallback,
            base_len,
            char_ids,
            ranks,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn byte_fallback(&self) -> bool {
        self.byte_fallback
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    /// Number of entries that are not merges.
    pub fn base_len(&self) -> usize {
        self.base_len as usize
    }

    /// Surface string of a token, with `▁` standing for a space.
    pub fn piece(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    pub fn is_special(&self, id: u32) -> bool {
        id < NUM_SPECIALS
    }

    /// Byte value if `id` is a fallback byte token.
    pub fn byte_value(&self, id: u32) -> Option<u8> {
        (self.byte_fallback && (NUM_SPECIALS..NUM_SPECIALS + BYTE_TOKENS).contains(&id))
            .then(|| (id - NUM_SPECIALS) as u8)
    }

    pub fn ids_where(&self, pred: impl Fn(&str) -> bool) -> Vec<u32> {
        (NUM_SPECIALS..self.vocab.len() as u32)
            .filter(|&id| self.byte_value(id).is_none() && pred(&self.vocab[id as usize]))
            .collect()
    }

    fn push_fallback(&self, s: &str, out: &mut Vec<u32>) -> usize {
        if self.byte_fallback {
            out.extend(s.bytes().map(|b| NUM_SPECIALS + b as u32));
            0
        } else {
            out.push(UNK);
            1
        }
    }

    fn encode_word(&self, word: &str, out: &mut Vec<u32>) -> usize {
        let mut unk = 0;
        let mut syms: Vec<u32> = Vec::with_capacity(word.len());
        // Runs of known characters are merged; fallback tokens never merge.
        let flush = |syms: &mut Vec<u32>, out: &mut Vec<u32>| {
            self.apply_merges(syms);
            out.append(syms);
        };
        let mut buf = [0u8; 4];
        for c in word.chars() {
            match self.char_ids.get(&c) {
                Some(&id) => syms.push(id),
                None => {
                    flush(&mut syms, out);
                    unk += self.push_fallback(c.encode_utf8(&mut buf), out);
                }
            }
        }
        flush(&mut syms, out);
        unk
    }

    fn apply_merges(&self, syms: &mut Vec<u32>) {
        while syms.len() > 1 {
            let best = syms
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0], w[1])).map(|&r| (r, i)))
                .min();
            let Some((rank, i)) = best else { break };
            let new_id = self.base_len + rank;
            let (a, b) = self.merges[rank as usize];
            syms[i] = new_id;
            syms.remove(i + 1);
            // Merge every further non-overlapping occurrence left to right.
            let mut j = i + 1;
            while j + 1 < syms.len() {
                if syms[j] == a && syms[j + 1] == b {
                    syms[j] = new_id;
                    syms.remove(j + 1);
                }
                j += 1;
            }
        }
    }

    /// Token ids and the number of UNK tokens emitted (always 0 with byte
    /// fallback).
    pub fn encode_counting(&self, text: &str) -> (Vec<u32>, usize) {
        let mut out = Vec::with_capacity(text.len() / 3 + 1);
        let mut unk = 0;
        for pt in pre_tokenize(text) {
            unk += match pt {
                PreToken::Text(w) => self.encode_word(&w, &mut out),
                PreToken::Raw(s) => self.push_fallback(s, &mut out),
            };
        }
        (out, unk)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.encode_counting(text).0
    }

    /// Inverse of [`encode`](Self::encode). Special tokens are dropped, except
    /// UNK which decodes to U+FFFD.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        let mut bytes: Vec<u8> = Vec::new();
        for &id in ids {
            if id as usize >= self.vocab.len() {
                return Err(Error::Tokenizer(format!("token id {id} out of range for vocab {}", self.vocab.len())));
            }
            if let Some(b) = self.byte_value(id) {
                bytes.push(b);
                continue;
            }
            if !bytes.is_empty() {
                out.push_str(&String::from_utf8_lossy(&bytes));
                bytes.clear();
            }
            match id {
                UNK => out.push('\u{FFFD}'),
                id if self.is_special(id) => {}
                id => out.extend(self.vocab[id as usize].chars().map(|c| if c == META { ' ' } else { c })),
            }
        }
        if !bytes.is_empty() {
            out.push_str(&String::from_utf8_lossy(&bytes));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            byte_fallback: self.byte_fallback,
            specials: SPECIALS.iter().map(|s| s.to_string()).collect(),
            vocab: self.vocab.clone(),
            merges: self.merges.iter().map(|&(a, b)| [a, b]).collect(),
        };
        Ok(serde_json::to_vec(&file)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let file: ModelFile = serde_json::from_slice(bytes)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Tokenizer(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        if file.specials != SPECIALS {
            return Err(Error::Tokenizer("special token table differs".into()));
        }
        let merges = file.merges.into_iter().map(|[a, b]| (a, b)).collect();
        Self::assemble(file.vocab, merges, file.byte_fallback)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read(path)?)
    }
}

#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: i64,
    left: String,
    right: String,
    pair: (u32, u32),
}

impl Ord for Candidate {
    // Highest count first; among equal counts the lexicographically smallest
    // pair of strings wins.
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn pair_counts(word: &[u32]) -> impl Iterator<Item = (u32, u32)> + '_ {
    word.windows(2).map(|w| (w[0], w[1]))
}

/// Learns merges until the vocabulary has `vocab_size` entries.
pub fn bpe_train<S: AsRef<str>>(sentences: &[S], vocab_size: usize, byte_fallback: bool) -> Result<TokenizerModel> {
    if sentences.is_empty() {
        return Err(Error::Tokenizer("empty training stream".into()));
    }
    let mut word_freq: HashMap<String, i64> = HashMap::new();
    for s in sentences {
        for pt in pre_tokenize(s.as_ref()) {
            if let PreToken::Text(w) = pt {
                *word_freq.entry(w).or_insert(0) += 1;
            }
        }
    }
    let mut char_freq: HashMap<char, i64> = HashMap::new();
    for (w, &f) in &word_freq {
        for c in w.chars() {
            *char_freq.entry(c).or_insert(0) += f;
        }
    }
    let mut chars: Vec<(char, i64)> = char_freq.into_iter().collect();
    chars.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut vocab: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    if byte_fallback {
        vocab.extend((0..=255u8).map(byte_token));
    }
    let mut char_ids = HashMap::new();
    for (c, _) in &chars {
        char_ids.insert(*c, vocab.len() as u32);
        vocab.push(c.to_string());
    }
    if vocab_size < vocab.len() {
        return Err(Error::Tokenizer(format!(
            "vocab size {vocab_size} is below the {} base symbols",
            vocab.len()
        )));
    }

    // Distinct words in a fixed order so training is independent of hashing.
    let mut words: Vec<(String, i64)> = word_freq.into_iter().collect();
    words.sort();
    let freqs: Vec<i64> = words.iter().map(|w| w.1).collect();
    let mut symbols: Vec<Vec<u32>> = words.iter().map(|(w, _)| w.chars().map(|c| char_ids[&c]).collect()).collect();

    let mut counts: HashMap<(u32, u32), i64> = HashMap::new();
    let mut where_: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (wi, syms) in symbols.iter().enumerate() {
        for p in pair_counts(syms) {
            *counts.entry(p).or_insert(0) += freqs[wi];
            where_.entry(p).or_default().insert(wi);
        }
    }
    let candidate = |vocab: &[String], pair: (u32, u32), count: i64| Candidate {
        count,
        left: vocab[pair.0 as usize].clone(),
        right: vocab[pair.1 as usize].clone(),
        pair,
    };
    let mut heap: BinaryHeap<Candidate> = counts.iter().map(|(&p, &c)| candidate(&vocab, p, c)).collect();

    let mut merges = Vec::new();
    while vocab.len() < vocab_size {
        let Some(top) = heap.pop() else {
            return Err(Error::VocabUnreachable {
                requested: vocab_size,
                reached: vocab.len(),
            });
        };
        let current = counts.get(&top.pair).copied().unwrap_or(0);
        if current != top.count {
            if current > 0 {
                heap.push(candidate(&vocab, top.pair, current));
            }
            continue;
        }
        if current <= 0 {
            continue;
        }
        let (a, b) = top.pair;
        let new_id = vocab.len() as u32;
        vocab.push(format!("{}{}", top.left, top.right));
        merges.push((a, b));

        let mut affected: Vec<usize> = where_.remove(&top.pair).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        let mut touched: HashSet<(u32, u32)> = HashSet::new();
        for wi in affected {
            let syms = &mut symbols[wi];
            if !syms.windows(2).any(|w| w[0] == a && w[1] == b) {
                continue;
            }
            let f = freqs[wi];
            for p in pair_counts(syms) {
                *counts.get_mut(&p).unwrap() -= f;
            }
            let mut merged = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == a && syms[i + 1] == b {
                    merged.push(new_id);
                    i += 2;
                } else {
                    merged.push(syms[i]);
                    i += 1;
                }
            }
            *syms = merged;
            for p in pair_counts(syms) {
                *counts.entry(p).or_insert(0) += f;
                if p.0 == new_id || p.1 == new_id {
                    touched.insert(p);
                }
                if p != top.pair {
                    where_.entry(p).or_default().insert(wi);
                }
            }
        }
        counts.retain(|_, c| *c > 0);
        let mut touched: Vec<(u32, u32)> = touched.into_iter().collect();
        touched.sort_unstable();
        for p in touched {
            if let Some(&c) = counts.get(&p) {
                heap.push(candidate(&vocab, p, c));
            }
        }
    }
    TokenizerModel::assemble(vocab, merges, byte_fallback)
}

/// Token ids per symbol table, keyed by surface string, for inspection.
pub fn vocab_table(model: &TokenizerModel) -> BTreeMap<u32, &str> {
    (0..model.vocab_size() as u32).map(|id| (id, model.piece(id).unwrap())).collect()
}
