//! Keeps every piece of text sent to the MT backend within the token limit.

use crate::tokenizer::{TokenizerModel, META};

pub const DEFAULT_MAX_TOKENS: usize = 256;

const CLAUSE_PUNCT: &[char] = &[',', ';', ':', '،', '؛', '、', '，', '；', '：'];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub text: String,
    /// Whether whitespace separated this chunk from the previous one in the
    /// original sentence.
    pub space_before: bool,
    /// Token count of `text` under the MT tokenizer.
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChunkCheck {
    Ok { tokens: usize },
    /// Token offsets (into the sentence's encoding) where chunks start,
    /// excluding 0, and the resulting chunks.
    OverLimit { split_points: Vec<usize>, chunks: Vec<Chunk> },
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Boundary {
    Hard,
    Char,
    Word,
    Clause,
}

fn boundary_kind(tok: &TokenizerModel, ids: &[u32], b: usize) -> Boundary {
    if let Some(byte) = tok.byte_value(ids[b]) {
        if (0x80..0xC0).contains(&byte) {
            return Boundary::Hard;
        }
    }
    let prev = ids[b - 1];
    if tok.byte_value(prev).is_none() {
        let p = tok.piece(prev).unwrap_or("");
        if p.trim_end_matches(META).ends_with(CLAUSE_PUNCT) {
            return Boundary::Clause;
        }
    }
    match tok.byte_value(ids[b]) {
        Some(byte) if byte.is_ascii_whitespace() => Boundary::Word,
        Some(_) => Boundary::Char,
        None => {
            let p = tok.piece(ids[b]).unwrap_or("");
            if p.starts_with(META) || p.starts_with(char::is_whitespace) {
                Boundary::Word
            } else {
                Boundary::Char
            }
        }
    }
}

fn make_chunk(tok: &TokenizerModel, ids: &[u32]) -> (String, bool, bool) {
    let raw = tok.decode(ids).unwrap_or_default();
    let lead = raw.starts_with(char::is_whitespace);
    let trail = raw.ends_with(char::is_whitespace);
    (raw.trim().to_string(), lead, trail)
}

/// Splits greedily: each chunk extends as far as the limit allows and ends at
/// the last clause punctuation in range, else the last word boundary, else
/// the last character boundary, else an arbitrary token boundary. Every chunk
/// is re-encoded to confirm it fits.
pub fn check_chunk(sentence: &str, tok: &TokenizerModel, max_tokens: usize) -> ChunkCheck {
    let ids = tok.encode(sentence);
    if ids.len() <= max_tokens {
        return ChunkCheck::Ok { tokens: ids.len() };
    }
    let max_tokens = max_tokens.max(1);
    let mut split_points = Vec::new();
    let mut chunks: Vec<Chunk> = Vec::new();
    let mut start = 0;
    let mut pending_space = false;
    while start < ids.len() {
        let end = if ids.len() - start <= max_tokens {
            ids.len()
        } else {
            let hi = start + max_tokens;
            let mut cands: Vec<(Boundary, usize)> = (start + 1..=hi).map(|b| (boundary_kind(tok, &ids, b), b)).collect();
            cands.sort_by(|a, b| b.cmp(a));
            cands
                .into_iter()
                .map(|(_, b)| b)
                .find(|&b| {
                    let (text, _, _) = make_chunk(tok, &ids[start..b]);
                    tok.encode(&text).len() <= max_tokens
                })
                .unwrap_or(start + 1)
        };
        let (text, lead, trail) = make_chunk(tok, &ids[start..end]);
        if start > 0 {
            split_points.push(start);
        }
        if text.is_empty() {
            pending_space = pending_space || lead || trail;
        } else {
            chunks.push(Chunk {
                tokens: tok.encode(&text).len(),
                text,
                space_before: pending_space || lead,
            });
            pending_space = trail;
        }
        start = end;
    }
    ChunkCheck::OverLimit { split_points, chunks }
}

/// The pieces to translate for one sentence.
pub fn sentence_chunks(sentence: &str, tok: &TokenizerModel, max_tokens: usize) -> Vec<Chunk> {
    match check_chunk(sentence, tok, max_tokens) {
        ChunkCheck::Ok { tokens } => vec![Chunk {
            text: sentence.to_string(),
            space_before: false,
            tokens,
        }],
        ChunkCheck::OverLimit { chunks, .. } => chunks,
    }
}

/// Reassembles translated chunks, restoring the original spacing.
pub fn join_chunks<S: AsRef<str>>(parts: &[(S, bool)]) -> String {
    let mut out = String::new();
    for (i, (text, space)) in parts.iter().enumerate() {
        if i > 0 && *space {
            out.push(' ');
        }
        out.push_str(text.as_ref());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::bpe_train;
    use proptest::prelude::*;

    fn tok() -> TokenizerModel {
        // Character-level model over a small alphabet: one token per char.
        bpe_train(&["abcdefghij ,."], 5 + 256 + 13, true).unwrap()
    }

    #[test]
    fn short_sentence_ok() {
        assert_eq!(check_chunk("abc def", &tok(), 10), ChunkCheck::Ok { tokens: 7 });
    }

    #[test]
    fn long_sentence_splits_under_limit() {
        let t = tok();
        let s = vec!["abcdefghi"; 30].join(" ");
        assert_eq!(t.encode(&s).len(), 299);
        let ChunkCheck::OverLimit { chunks, .. } = check_chunk(&s, &t, 256) else { panic!() };
        assert!(chunks.len() >= 2);
        assert!(chunks.iter().all(|c| c.tokens <= 256 && t.encode(&c.text).len() == c.tokens));
        let parts: Vec<(&str, bool)> = chunks.iter().map(|c| (c.text.as_str(), c.space_before)).collect();
        assert_eq!(join_chunks(&parts), s);
    }

    #[test]
    fn splits_at_comma() {
        let t = tok();
        // 127 letters, a comma at token index 127, then a space and 129 more.
        let s = format!("{}, {}", "a".repeat(127), "b".repeat(128));
        let ids = t.encode(&s);
        assert_eq!(ids.len(), 257);
        assert_eq!(t.piece(ids[127]), Some(","));
        let ChunkCheck::OverLimit { split_points, chunks } = check_chunk(&s, &t, 256) else { panic!() };
        assert_eq!(split_points, [128]);
        assert_eq!(chunks[0].text, format!("{},", "a".repeat(127)));
        assert!(chunks[1].space_before);
    }

    #[test]
    fn unbroken_run_hard_splits() {
        let t = tok();
        let s = "j".repeat(600);
        let chunks = sentence_chunks(&s, &t, 256);
        assert_eq!(chunks.iter().map(|c| c.tokens).collect::<Vec<_>>(), [256, 256, 88]);
        assert!(chunks.iter().all(|c| !c.space_before));
    }

    #[test]
    fn multibyte_fallback_not_split_mid_char() {
        let t = tok();
        // Each Devanagari char falls back to three byte tokens.
        let s = "क".repeat(100);
        let chunks = sentence_chunks(&s, &t, 256);
        assert!(chunks.iter().all(|c| c.tokens <= 256 && !c.text.contains('\u{FFFD}')));
        assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), s);
    }

    proptest! {
        #[test]
        fn chunks_fit_and_rejoin(words in prop::collection::vec("[a-j]{1,12}[,.]?", 1..120), max in 8usize..64) {
            let t = tok();
            let s = words.join(" ");
            let chunks = sentence_chunks(&s, &t, max);
            for c in &chunks {
                prop_assert!(t.encode(&c.text).len() <= max);
            }
            let parts: Vec<(&str, bool)> = chunks.iter().map(|c| (c.text.as_str(), c.space_before)).collect();
            prop_assert_eq!(join_chunks(&parts), s);
        }
    }
}
