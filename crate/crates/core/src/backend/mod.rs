//! Completion backends.
//!
//! [`LiveBackend`] talks to a completion-style HTTP endpoint.
//! [`ReplayBackend`] serves completions from a [`ReplayCache`] and never
//! touches the network; [`RecordingBackend`] calls a live backend and
//! persists every response so a later replay reproduces it byte for byte.

mod cache;
mod live;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheError, CompletionRecord, ReplayCache, CACHE_FORMAT, DIGEST_ALGORITHM};
pub use live::{
    HttpResponse, LiveBackend, LiveConfig, ReqwestTransport, RetryPolicy, Transport,
    TransportError, API_KEY_ENV,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub engine: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub best_of: u32,
}

pub const DEFAULT_ENGINE: &str = "davinci-002";

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            engine: DEFAULT_ENGINE.to_string(),
            max_tokens: 100,
            temperature: 0.0,
            top_p: 1.0,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
            best_of: 1,
        }
    }
}

fn canonical_float(x: f64) -> String {
    // -0.0 and 0.0 must digest identically.
    if x == 0.0 {
        "0".to_string()
    } else {
        x.to_string()
    }
}

impl CompletionParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |msg: String| Err(BackendError::InvalidParams(msg));
        if self.engine.trim().is_empty() {
            return bad("engine must not be empty".into());
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return bad(format!(
                "temperature {} is outside [0, 1]",
                self.temperature
            ));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p {} is outside (0, 1]", self.top_p));
        }
        if !self.frequency_penalty.is_finite() || !self.presence_penalty.is_finite() {
            return bad("penalties must be finite".into());
        }
        if self.best_of == 0 {
            return bad("best_of must be at least 1".into());
        }
        Ok(())
    }

    /// Stable textual form hashed into prompt digests.
    pub fn canonical(&self) -> String {
        format!(
            "engine={}\nmax_tokens={}\ntemperature={}\ntop_p={}\nfrequency_penalty={}\npresence_penalty={}\nbest_of={}\n",
            self.engine.escape_default(),
            self.max_tokens,
            canonical_float(self.temperature),
            canonical_float(self.top_p),
            canonical_float(self.frequency_penalty),
            canonical_float(self.presence_penalty),
            self.best_of,
        )
    }
}

/// Hex SHA-256 over the prompt bytes and the canonical parameters.
pub fn prompt_digest(prompt: &str, params: &CompletionParams) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"plan-harvest/completion/v1\n");
    hasher.update((prompt.len() as u64).to_le_bytes());
    hasher.update(prompt.as_bytes());
    hasher.update(params.canonical().as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid completion parameters: {0}")]
    InvalidParams(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("authentication failed ({message}); check the {env_var} environment variable")]
    Auth {
        env_var: &'static str,
        message: String,
    },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("rate limited; gave up after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unexpected response body: {0}")]
    InvalidResponse(String),
    #[error("no cached completion for digest {digest}; re-run in record mode")]
    CacheMiss { digest: String },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

impl BackendError {
    /// Errors that make every further request pointless.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            BackendError::Auth { .. } | BackendError::InvalidParams(_)
        )
    }
}

pub trait CompletionBackend: Send + Sync {
    /// Returns the raw completion text for `prompt`.
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, BackendError>;
}

fn check_request(prompt: &str, params: &CompletionParams) -> Result<(), BackendError> {
    if prompt.is_empty() {
        return Err(BackendError::EmptyPrompt);
    }
    params.validate()
}

pub struct ReplayBackend {
    cache: Arc<ReplayCache>,
}

impl ReplayBackend {
    pub fn new(cache: Arc<ReplayCache>) -> Self {
        Self { cache }
    }

    pub fn cache(&self) -> &ReplayCache {
        &self.cache
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, BackendError> {
        check_request(prompt, params)?;
        let digest = prompt_digest(prompt, params);
        self.cache
            .get(&digest)
            .map(|r| r.completion)
            .ok_or(BackendError::CacheMiss { digest })
    }
}

pub struct RecordingBackend {
    live: Box<dyn CompletionBackend>,
    cache: Arc<ReplayCache>,
}

impl RecordingBackend {
    pub fn new(live: Box<dyn CompletionBackend>, cache: Arc<ReplayCache>) -> Self {
        Self { live, cache }
    }
}

impl CompletionBackend for RecordingBackend {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, BackendError> {
        record_run(self.live.as_ref(), prompt, params, &self.cache)
    }
}

/// Calls `live`, stores the completion under the request digest and returns it.
pub fn record_run(
    live: &dyn CompletionBackend,
    prompt: &str,
    params: &CompletionParams,
    cache: &ReplayCache,
) -> Result<String, BackendError> {
    check_request(prompt, params)?;
    let completion = live.complete(prompt, params)?;
    cache.insert(CompletionRecord::now(
        prompt_digest(prompt, params),
        completion.clone(),
        params.engine.clone(),
    ))?;
    Ok(completion)
}
