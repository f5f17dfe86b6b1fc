//! Shared multilingual BPE tokenizer.

pub mod bpe;
pub mod sample;

pub use bpe::{bpe_train, TokenizerModel, BOS, EOS, META, PAD, SEP, UNK};
pub use sample::{manifest_sentences, sample_sentences, PlanEntry, SampledSentence, SamplingPlan};
