//! Corpus pipeline for synthetic ("translationese") pretraining data:
//! cleaning and deduplication, a shared BPE tokenizer, machine-translation
//! bridging with truncation repair, perplexity scoring with a small LM, and
//! budget-driven filtering.

pub mod budget;
pub mod clean;
pub mod corpus;
mod error;
pub mod filter;
pub mod hash;
pub mod pipeline;
pub mod tokenizer;
pub mod translate;

pub use corpus::{
    count_word_tokens, load_manifest, save_manifest, CorpusManifest, Document, DropReason, LanguageTag, Provenance,
    ProvenanceKind, Stage,
};
pub use error::{Error, Result};
pub use hash::murmur3_128;
