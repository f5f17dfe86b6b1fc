use std::sync::LazyLock;

use regex::Regex;
use unicode_normalization::UnicodeNormalization;

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^>]*>").unwrap());

/// Emoticons, Miscellaneous Symbols, Misc Symbols and Pictographs, Transport
/// and Map, and the emoji presentation selectors.
fn is_emoticon(c: char) -> bool {
    matches!(c as u32,
        0x1F600..=0x1F64F | 0x2600..=0x26FF | 0x1F300..=0x1F5FF | 0x1F680..=0x1F6FF | 0xFE0E | 0xFE0F)
}

fn is_stripped(c: char) -> bool {
    is_emoticon(c) || (c.is_control() && !c.is_whitespace())
}

/// Cleans one raw document:
/// HTML tags are removed, emoticon and control code points stripped, the
/// result NFC-composed, whitespace runs containing two or more newlines become
/// a single blank line and every other run a single space.
pub fn normalize_text(raw: &str) -> String {
    let untagged = TAG.replace_all(raw, "");
    let stripped: String = untagged.chars().filter(|&c| !is_stripped(c)).collect();
    let composed: String = stripped.nfc().collect();
    collapse_whitespace(&composed)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    pub text: String,
    /// Number of invalid UTF-8 sequences replaced by U+FFFD.
    pub replaced: usize,
}

/// As [`normalize_text`], for input that may not be valid UTF-8.
pub fn normalize_bytes(raw: &[u8]) -> Normalized {
    let mut replaced = 0;
    let mut text = String::with_capacity(raw.len());
    for chunk in raw.utf8_chunks() {
        text.push_str(chunk.valid());
        if !chunk.invalid().is_empty() {
            text.push('\u{FFFD}');
            replaced += 1;
        }
    }
    Normalized {
        text: normalize_text(&text),
        replaced,
    }
}

fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut newlines = 0usize;
    let mut in_run = false;
    for c in s.chars() {
        if c.is_whitespace() {
            in_run = true;
            if c == '\n' {
                newlines += 1;
            }
            continue;
        }
        if in_run && !out.is_empty() {
            out.push_str(if newlines >= 2 { "\n\n" } else { " " });
        }
        in_run = false;
        newlines = 0;
        out.push(c);
    }
    out
}
