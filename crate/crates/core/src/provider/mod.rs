//! LLM access layer: the provider trait, request/response types, token
//! ledger, content-addressed cache keys, and the concrete providers
//! (OpenAI-compatible HTTP, scripted mock, disk cache wrapper).

mod cache;
mod http;
mod mock;

pub use cache::CacheProvider;
pub use http::{
    HttpProvider, HttpProviderConfig, RetryPolicy, Transport, TransportError, TransportReply,
    UreqTransport,
};
pub use mock::{MockEntry, MockMatcher, MockProvider};

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: ChatRole::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: ChatRole::User,
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: ChatRole::Assistant,
            content: content.into(),
        }
    }
}

/// One chat-completions request. Temperature defaults to 0 for
/// reproducible outputs and is recorded in the audit trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    /// `"json"` asks the provider for a JSON object response where
    /// supported; the prompt itself always states the schema.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_format_hint: Option<String>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature: 0.0,
            max_tokens: None,
            response_format_hint: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: Option<u32>) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn json_hint(mut self) -> Self {
        self.response_format_hint = Some("json".to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub provider_id: String,
    /// True when replayed from the response cache (original token counts
    /// are replayed too).
    #[serde(default)]
    pub cached: bool,
}

/// Call metadata used for ledger attribution and mock script matching.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallMeta {
    pub stage: String,
    pub case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

impl CallMeta {
    pub fn new(stage: impl Into<String>, case_id: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            case_id: case_id.into(),
            role: None,
        }
    }

    pub fn with_role(mut self, role: impl Into<String>) -> Self {
        self.role = Some(role.into());
        self
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider exhausted after {attempts} attempts: {last_error}")]
    Exhausted { attempts: u32, last_error: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("provider returned HTTP {status}: {detail}")]
    Http { status: u16, detail: String },
    #[error("no scripted response matches stage={stage:?} case_id={case_id:?} role={role:?}")]
    NoScriptMatch {
        stage: String,
        case_id: String,
        role: Option<String>,
    },
    #[error("response cache io at {path}: {source}")]
    CacheIo {
        path: String,
        source: std::io::Error,
    },
}

/// Synchronous chat completion. Implementations must be safe for
/// concurrent invocation.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, req: &ChatRequest, meta: &CallMeta) -> Result<ChatResponse, ProviderError>;
    fn id(&self) -> &str;
}

impl<P: ChatProvider + ?Sized> ChatProvider for Arc<P> {
    fn complete(&self, req: &ChatRequest, meta: &CallMeta) -> Result<ChatResponse, ProviderError> {
        (**self).complete(req, meta)
    }
    fn id(&self) -> &str {
        (**self).id()
    }
}

/// Stable content hash over (model, messages, temperature, max_tokens)
/// with canonical serialization, used for the response cache and for
/// key-addressed mock scripts.
pub fn cache_key(req: &ChatRequest) -> String {
    let canonical = serde_json::json!({
        "max_tokens": req.max_tokens,
        "messages": req.messages.iter().map(|m| {
            serde_json::json!({"content": m.content, "role": match m.role {
                ChatRole::System => "system",
                ChatRole::User => "user",
                ChatRole::Assistant => "assistant",
            }})
        }).collect::<Vec<_>>(),
        "model": req.model,
        "temperature": format!("{:?}", req.temperature),
    });
    let mut hasher = Sha256::new();
    hasher.update(canonical.to_string().as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTotals {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenTotals {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn add(&mut self, prompt: u64, completion: u64) {
        self.prompt_tokens += prompt;
        self.completion_tokens += completion;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub stage: String,
    pub case_id: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Per-call token accounting. Appends are serialized under a mutex so
/// concurrent stages commit in a total order; totals always equal the sum
/// of the entries.
#[derive(Debug, Default)]
pub struct TokenLedger {
    entries: Mutex<Vec<LedgerEntry>>,
}

impl TokenLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, entry: LedgerEntry) {
        self.entries.lock().expect("ledger poisoned").push(entry);
    }

    pub fn snapshot(&self) -> Vec<LedgerEntry> {
        self.entries.lock().expect("ledger poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("ledger poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total(&self) -> TokenTotals {
        let mut totals = TokenTotals::default();
        for e in self.entries.lock().expect("ledger poisoned").iter() {
            totals.add(e.prompt_tokens, e.completion_tokens);
        }
        totals
    }

    pub fn totals_by_stage(&self) -> BTreeMap<String, TokenTotals> {
        let mut by_stage: BTreeMap<String, TokenTotals> = BTreeMap::new();
        for e in self.entries.lock().expect("ledger poisoned").iter() {
            by_stage
                .entry(e.stage.clone())
                .or_default()
                .add(e.prompt_tokens, e.completion_tokens);
        }
        by_stage
    }

    /// Per-stage subtotals restricted to one case.
    pub fn totals_for_case(&self, case_id: &str) -> BTreeMap<String, TokenTotals> {
        let mut by_stage: BTreeMap<String, TokenTotals> = BTreeMap::new();
        for e in self.entries.lock().expect("ledger poisoned").iter() {
            if e.case_id == case_id {
                by_stage
                    .entry(e.stage.clone())
                    .or_default()
                    .add(e.prompt_tokens, e.completion_tokens);
            }
        }
        by_stage
    }

    pub fn entries_for_stage(&self, stage: &str) -> usize {
        self.entries
            .lock()
            .expect("ledger poisoned")
            .iter()
            .filter(|e| e.stage == stage)
            .count()
    }
}

/// Provider wrapper that appends one ledger entry per successful call.
/// Failed calls (including exhausted retries) leave no entry.
pub struct RecordingProvider<P> {
    inner: P,
    ledger: Arc<TokenLedger>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn new(inner: P, ledger: Arc<TokenLedger>) -> Self {
        Self { inner, ledger }
    }

    pub fn ledger(&self) -> &Arc<TokenLedger> {
        &self.ledger
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn complete(&self, req: &ChatRequest, meta: &CallMeta) -> Result<ChatResponse, ProviderError> {
        let resp = self.inner.complete(req, meta)?;
        self.ledger.record(LedgerEntry {
            stage: meta.stage.clone(),
            case_id: meta.case_id.clone(),
            prompt_tokens: resp.prompt_tokens,
            completion_tokens: resp.completion_tokens,
        });
        Ok(resp)
    }

    fn id(&self) -> &str {
        self.inner.id()
    }
}

/// Counting semaphore bounding in-flight provider requests.
pub(crate) struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    pub(crate) fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore poisoned");
        while *permits == 0 {
            permits = self.cv.wait(permits).expect("semaphore poisoned");
        }
        *permits -= 1;
        SemaphoreGuard { sem: self }
    }
}

pub(crate) struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.sem.permits.lock().expect("semaphore poisoned");
        *permits += 1;
        self.sem.cv.notify_one();
    }
}
