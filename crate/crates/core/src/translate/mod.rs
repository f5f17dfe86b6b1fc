//! Sentence splitting, length-limited MT requests, document reassembly and
//! truncation repair.

pub mod backend;
pub mod chunk;
pub mod corpus;
pub mod repair;
pub mod split;

pub use backend::{
    BackendError, DropEvery, HttpBackend, IdentityBackend, MtBackend, MtBackendDescriptor, TableBackend, WireRequest,
    WireResponse,
};
pub use chunk::{check_chunk, join_chunks, sentence_chunks, Chunk, ChunkCheck, DEFAULT_MAX_TOKENS};
pub use corpus::{repair_records, synthetic_id, translate_corpus, TranslateOptions, TranslateStats, TranslationOutcome};
pub use repair::{
    detect_truncation, ends_with_terminal, is_truncated, repair_truncated, RecordStatus, Repairer, TranslationRecord,
    DEFAULT_REPAIR_MAX_NEW,
};
pub use split::{sentence_joiner, split_document, split_sentences, split_with, NonbreakingPrefixes, SentenceSpan};
