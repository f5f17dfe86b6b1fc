//! Documents, manifests and the line-delimited manifest file format.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::hash::{hex128, murmur3_128};
use crate::{Error, Result};

/// ISO 639 language code with an optional ISO 15924 script, written `hi` or
/// `hi-Deva`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageTag {
    code: String,
    script: Option<String>,
}

impl LanguageTag {
    pub fn new(code: &str) -> Result<Self> {
        code.parse()
    }

    pub fn with_script(code: &str, script: &str) -> Result<Self> {
        format!("{code}-{script}").parse()
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn script(&self) -> Option<&str> {
        self.script.as_deref()
    }

    /// Same language regardless of script annotation.
    pub fn same_language(&self, other: &LanguageTag) -> bool {
        self.code == other.code
    }
}

impl FromStr for LanguageTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (code, script) = match s.split_once(['-', '_']) {
            Some((c, sc)) => (c, Some(sc)),
            None => (s, None),
        };
        if code.is_empty() || !code.bytes().all(|b| b.is_ascii_lowercase()) {
            return Err(Error::InvalidLanguage(s.to_string()));
        }
        if let Some(sc) = script {
            let ok = sc.len() == 4
                && sc.as_bytes()[0].is_ascii_uppercase()
                && sc.bytes().skip(1).all(|b| b.is_ascii_lowercase());
            if !ok {
                return Err(Error::InvalidLanguage(s.to_string()));
            }
        }
        Ok(Self {
            code: code.to_string(),
            script: script.map(str::to_string),
        })
    }
}

impl TryFrom<String> for LanguageTag {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LanguageTag> for String {
    fn from(t: LanguageTag) -> String {
        t.to_string()
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.script {
            Some(s) => write!(f, "{}-{}", self.code, s),
            None => f.write_str(&self.code),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProvenanceKind {
    Clean,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: ProvenanceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_lang: Option<LanguageTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mt_model_id: Option<String>,
    #[serde(default)]
    pub repaired: bool,
}

impl Provenance {
    pub fn clean() -> Self {
        Self {
            kind: ProvenanceKind::Clean,
            source_lang: None,
            mt_model_id: None,
            repaired: false,
        }
    }

    pub fn synthetic(source_lang: LanguageTag, mt_model_id: impl Into<String>, repaired: bool) -> Self {
        Self {
            kind: ProvenanceKind::Synthetic,
            source_lang: Some(source_lang),
            mt_model_id: Some(mt_model_id.into()),
            repaired,
        }
    }

    pub fn is_synthetic(&self) -> bool {
        self.kind == ProvenanceKind::Synthetic
    }

    fn check(&self) -> std::result::Result<(), String> {
        match (self.kind, &self.source_lang) {
            (ProvenanceKind::Clean, Some(_)) => Err("clean provenance must not carry source_lang".into()),
            (ProvenanceKind::Synthetic, None) => Err("synthetic provenance requires source_lang".into()),
            _ => Ok(()),
        }
    }
}

/// Why a document ended up in a dropped manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Lid,
    Toxicity,
    DedupEmpty,
    DuplicateId,
    TranslationFailed,
    Perplexity,
    Unscorable,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Lid => "lid",
            DropReason::Toxicity => "toxicity",
            DropReason::DedupEmpty => "dedup_empty",
            DropReason::DuplicateId => "duplicate_id",
            DropReason::TranslationFailed => "translation_failed",
            DropReason::Perplexity => "perplexity",
            DropReason::Unscorable => "unscorable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub lang: LanguageTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub text: String,
    /// Byte spans `[start, end)` into `text`.
    pub paragraphs: Vec<[usize; 2]>,
    pub provenance: Provenance,
    pub word_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bpe_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_reason: Option<DropReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppl: Option<f64>,
}

/// Number of maximal non-whitespace runs.
pub fn count_word_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Content id: 32 hex digits of the 128-bit hash of the URL, or of the text
/// when there is no URL.
pub fn document_id(url: Option<&str>, text: &str) -> String {
    hex128(murmur3_128(url.unwrap_or(text).as_bytes(), 0))
}

/// Paragraph spans of `text`: blank-line separated blocks, each trimmed of
/// surrounding whitespace, empty blocks skipped.
pub fn paragraph_spans(text: &str) -> Vec<[usize; 2]> {
    let mut spans = Vec::new();
    let mut start = 0;
    for piece in text.split("\n\n") {
        let lead = piece.len() - piece.trim_start().len();
        let trimmed = piece.trim();
        if !trimmed.is_empty() {
            let s = start + lead;
            spans.push([s, s + trimmed.len()]);
        }
        start += piece.len() + 2;
    }
    spans
}

impl Document {
    /// Clean document from already-normalized text.
    pub fn new(lang: LanguageTag, url: Option<String>, text: String) -> Self {
        let id = document_id(url.as_deref(), &text);
        Self::with_id(id, lang, url, text, Provenance::clean())
    }

    pub fn with_id(id: String, lang: LanguageTag, url: Option<String>, text: String, provenance: Provenance) -> Self {
        Self {
            paragraphs: paragraph_spans(&text),
            word_tokens: count_word_tokens(&text),
            id,
            lang,
            url,
            text,
            provenance,
            bpe_tokens: None,
            drop_reason: None,
            predicted_lang: None,
            ppl: None,
        }
    }

    /// Document whose text is `paragraphs` joined by one blank line; spans
    /// point at exactly those paragraphs.
    pub fn from_paragraphs<S: AsRef<str>>(
        id: String,
        lang: LanguageTag,
        url: Option<String>,
        paragraphs: &[S],
        provenance: Provenance,
    ) -> Self {
        let mut text = String::new();
        let mut spans = Vec::with_capacity(paragraphs.len());
        for (i, p) in paragraphs.iter().enumerate() {
            if i > 0 {
                text.push_str("\n\n");
            }
            let s = text.len();
            text.push_str(p.as_ref());
            spans.push([s, text.len()]);
        }
        Self {
            word_tokens: count_word_tokens(&text),
            paragraphs: spans,
            id,
            lang,
            url,
            text,
            provenance,
            bpe_tokens: None,
            drop_reason: None,
            predicted_lang: None,
            ppl: None,
        }
    }

    /// Same identity and provenance, new paragraph content. Annotations are
    /// cleared.
    pub fn rebuild<S: AsRef<str>>(&self, paragraphs: &[S]) -> Self {
        Self::from_paragraphs(
            self.id.clone(),
            self.lang.clone(),
            self.url.clone(),
            paragraphs,
            self.provenance.clone(),
        )
    }

    pub fn paragraph_texts(&self) -> impl Iterator<Item = &str> + '_ {
        self.paragraphs.iter().map(|&[s, e]| &self.text[s..e])
    }

    pub fn dropped(mut self, reason: DropReason) -> Self {
        self.drop_reason = Some(reason);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::Invariant {
            doc_id: self.id.clone(),
            reason,
        };
        let mut prev_end = 0;
        for (i, &[s, e]) in self.paragraphs.iter().enumerate() {
            if s > e || e > self.text.len() {
                return Err(fail(format!("paragraph {i} span [{s}, {e}) out of bounds")));
            }
            if s < prev_end {
                return Err(fail(format!("paragraph {i} span [{s}, {e}) overlaps or is out of order")));
            }
            if !self.text.is_char_boundary(s) || !self.text.is_char_boundary(e) {
                return Err(fail(format!("paragraph {i} span [{s}, {e}) splits a character")));
            }
            prev_end = e;
        }
        let words = count_word_tokens(&self.text);
        if words != self.word_tokens {
            return Err(fail(format!("word_tokens is {} but text has {words}", self.word_tokens)));
        }
        self.provenance.check().map_err(fail)
    }
}

/// Pipeline stage tags, in the only order stages may be applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Raw,
    Clean,
    Lid,
    Toxicity,
    Dedup,
    Merged,
    Synthetic,
    Filtered,
    Split,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Raw,
        Stage::Clean,
        Stage::Lid,
        Stage::Toxicity,
        Stage::Dedup,
        Stage::Merged,
        Stage::Synthetic,
        Stage::Filtered,
        Stage::Split,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::Clean => "clean",
            Stage::Lid => "lid",
            Stage::Toxicity => "toxicity",
            Stage::Dedup => "dedup",
            Stage::Merged => "merged",
            Stage::Synthetic => "synthetic",
            Stage::Filtered => "filtered",
            Stage::Split => "split",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub lang: LanguageTag,
    pub stage: String,
    pub created_at: DateTime<Utc>,
    pub documents: Vec<Document>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    lang: LanguageTag,
    stage: String,
    created_at: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    manifest: Header,
}

impl CorpusManifest {
    /// Empty manifest. `created_at` defaults to the Unix epoch so outputs are
    /// reproducible; set it explicitly when a wall-clock stamp is wanted.
    pub fn new(lang: LanguageTag, stage: impl Into<String>) -> Self {
        Self {
            lang,
            stage: stage.into(),
            created_at: DateTime::<Utc>::UNIX_EPOCH,
            documents: Vec::new(),
        }
    }

    /// New manifest at `stage` inheriting language and timestamp.
    pub fn derive(&self, stage: impl Into<String>, documents: Vec<Document>) -> Self {
        Self {
            lang: self.lang.clone(),
            stage: stage.into(),
            created_at: self.created_at,
            documents,
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn total_word_tokens(&self) -> u64 {
        self.documents.iter().map(|d| d.word_tokens).sum()
    }

    pub fn total_bpe_tokens(&self) -> u64 {
        self.documents.iter().filter_map(|d| d.bpe_tokens).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.documents.iter().map(|d| d.id.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.documents.len());
        for doc in &self.documents {
            doc.validate()?;
            if !doc.lang.same_language(&self.lang) {
                return Err(Error::MixedLanguage {
                    expected: self.lang.to_string(),
                    found: doc.lang.to_string(),
                });
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::Invariant {
                    doc_id: doc.id.clone(),
                    reason: "duplicate id in manifest".into(),
                });
            }
        }
        Ok(())
    }

    /// Fails unless this manifest's stage comes strictly before `op`.
    pub fn require_before(&self, op: Stage) -> Result<()> {
        match Stage::parse(&self.stage) {
            Some(st) if st < op => Ok(()),
            _ => Err(Error::StageOrder {
                op: op.to_string(),
                stage: self.stage.clone(),
            }),
        }
    }
}

/// Writes a header line followed by one document per line. The file is
/// written to a sibling temp path and renamed into place.
pub fn save_manifest(manifest: &CorpusManifest, path: &Path) -> Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        let header = HeaderLine {
            manifest: Header {
                lang: manifest.lang.clone(),
                stage: manifest.stage.clone(),
                created_at: manifest.created_at,
            },
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for doc in &manifest.documents {
            serde_json::to_writer(&mut w, doc)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a manifest, validating every document. A file without a header line
/// takes its language from the first document and stage `raw`.
pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let reader = BufReader::new(File::open(path)?);
    let display = path.display().to_string();
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: display.clone(),
        line,
        reason,
    };

    let mut header: Option<Header> = None;
    let mut documents = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 && line.starts_with("{\"manifest\"") {
            let h: HeaderLine = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
            header = Some(h.manifest);
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        documents.push(doc);
    }

    let header = match header {
        Some(h) => h,
        None => Header {
            lang: match documents.first() {
                Some(d) => d.lang.clone(),
                None => LanguageTag::new("und")?,
            },
            stage: Stage::Raw.to_string(),
            created_at: DateTime::<Utc>::UNIX_EPOCH,
        },
    };
    let manifest = CorpusManifest {
        lang: header.lang,
        stage: header.stage,
        created_at: header.created_at,
        documents,
    };
    manifest.validate()?;
    Ok(manifest)
}
