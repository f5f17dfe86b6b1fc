use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("document {doc_id}: {reason}")]
    Invariant { doc_id: String, reason: String },
    #[error("invalid language tag {0:?}")]
    InvalidLanguage(String),
    #[error("mixed languages: expected {expected}, found {found}")]
    MixedLanguage { expected: String, found: String },
    #[error("stage order: {op} cannot run on a manifest at stage {stage:?}")]
    StageOrder { op: String, stage: String },
    #[error("language id: {0}")]
    Lid(String),
    #[error("toxic word list: {0}")]
    WordList(String),
    #[error("tokenizer: {0}")]
    Tokenizer(String),
    #[error("vocab size {requested} unreachable, no pairs left after {reached} entries")]
    VocabUnreachable { requested: usize, reached: usize },
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("translation: {0}")]
    Translate(String),
    #[error("filter: {0}")]
    Filter(String),
    #[error("budget: {0}")]
    Budget(String),
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Model(#[from] tinylm::ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
