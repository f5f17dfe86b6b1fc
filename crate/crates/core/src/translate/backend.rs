//! MT backends: the HTTP wire client and the built-in test backends.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::LanguageTag;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub src: String,
    pub tgt: String,
    pub beam: usize,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireResponse {
    pub translations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: connection failures, timeouts, 429 and 5xx replies.
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    /// The backend cannot translate this input at all.
    #[error("rejected: {0}")]
    Rejected(String),
}

pub trait MtBackend: Send + Sync {
    fn translate(&self, req: &WireRequest) -> std::result::Result<Vec<String>, BackendError>;
}

/// Echoes every sentence.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityBackend;

impl MtBackend for IdentityBackend {
    fn translate(&self, req: &WireRequest) -> std::result::Result<Vec<String>, BackendError> {
        Ok(req.sentences.clone())
    }
}

/// Exact-match dictionary; any sentence not in the table is rejected.
#[derive(Debug, Clone, Default)]
pub struct TableBackend {
    table: HashMap<String, String>,
}

impl TableBackend {
    pub fn new(table: HashMap<String, String>) -> Self {
        Self { table }
    }

    /// A JSON object mapping source sentences to translations.
    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(serde_json::from_slice(&std::fs::read(path)?)?))
    }
}

impl MtBackend for TableBackend {
    fn translate(&self, req: &WireRequest) -> std::result::Result<Vec<String>, BackendError> {
        req.sentences
            .iter()
            .map(|s| {
                self.table
                    .get(s)
                    .cloned()
                    .ok_or_else(|| BackendError::Rejected(format!("no table entry for {s:?}")))
            })
            .collect()
    }
}

/// POSTs the wire request as JSON and expects the translations back in
/// request order.
pub struct HttpBackend {
    url: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(url: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.to_string(),
            agent,
        }
    }
}

impl MtBackend for HttpBackend {
    fn translate(&self, req: &WireRequest) -> std::result::Result<Vec<String>, BackendError> {
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(req)
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(BackendError::Transient(format!("HTTP {status}")));
        }
        if status != 200 {
            return Err(BackendError::Protocol(format!("HTTP {status}")));
        }
        let body: WireResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Protocol(format!("bad response body: {e}")))?;
        Ok(body.translations)
    }
}

/// Wraps a backend and fails every `every`-th call with a transient error.
pub struct DropEvery<B> {
    inner: B,
    every: usize,
    calls: AtomicUsize,
}

impl<B> DropEvery<B> {
    pub fn new(inner: B, every: usize) -> Self {
        Self {
            inner,
            every: every.max(1),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<B: MtBackend> MtBackend for DropEvery<B> {
    fn translate(&self, req: &WireRequest) -> std::result::Result<Vec<String>, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        if n % self.every == 0 {
            return Err(BackendError::Transient(format!("injected failure on call {n}")));
        }
        self.inner.translate(req)
    }
}

fn default_batch() -> usize {
    64
}
fn default_beam() -> usize {
    5
}
fn default_timeout() -> u64 {
    120
}

/// Where and how to translate. `endpoint` is `identity`, `table:<path>` or an
/// `http(s)://` URL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MtBackendDescriptor {
    pub endpoint: String,
    pub model_id: String,
    pub src: LanguageTag,
    pub tgt: LanguageTag,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_beam")]
    pub beam: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl MtBackendDescriptor {
    pub fn new(endpoint: &str, model_id: &str, src: LanguageTag, tgt: LanguageTag) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            src,
            tgt,
            batch_size: default_batch(),
            beam: default_beam(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam < 1 {
            return Err(Error::Config("beam must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let ok = self.endpoint == "identity"
            || self.endpoint.starts_with("table:")
            || self.endpoint.starts_with("http://")
            || self.endpoint.starts_with("https://");
        if !ok {
            return Err(Error::Config(format!("unknown MT endpoint {:?}", self.endpoint)));
        }
        Ok(())
    }

    pub fn connect(&self) -> Result<Box<dyn MtBackend>> {
        self.validate()?;
        Ok(match self.endpoint.as_str() {
            "identity" => Box::new(IdentityBackend),
            e if e.starts_with("table:") => Box::new(TableBackend::load(Path::new(&e["table:".len()..]))?),
            e => Box::new(HttpBackend::new(e, Duration::from_secs(self.timeout_secs))),
        })
    }

    pub fn request(&self, sentences: Vec<String>) -> WireRequest {
        WireRequest {
            src: self.src.to_string(),
            tgt: self.tgt.to_string(),
            beam: self.beam,
            sentences,
        }
    }
}
