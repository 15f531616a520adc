use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use super::{check_request, BackendError, CompletionBackend, CompletionParams};

/// Environment variable holding the bearer credential.
pub const API_KEY_ENV: &str = "PLAN_HARVEST_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
    pub retry_after: Option<Duration>,
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// One JSON POST. Injected so tests can observe or fake the network.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let response = self
            .client
            .post(url)
            .bearer_auth(bearer)
            .timeout(timeout)
            .json(body)
            .send()
            .map_err(|e| TransportError(e.to_string()))?;
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = response.text().map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse {
            status,
            body,
            retry_after,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff for the given zero-based retry, honouring a server hint.
    pub fn delay(&self, retry: u32, hint: Option<Duration>) -> Duration {
        let backoff = self
            .base_delay
            .checked_mul(1u32.checked_shl(retry).unwrap_or(u32::MAX))
            .unwrap_or(self.max_delay);
        hint.unwrap_or(backoff).min(self.max_delay)
    }
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub endpoint_path: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com".into(),
            endpoint_path: "/v1/completions".into(),
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }
}

impl LiveConfig {
    pub fn url(&self) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            self.endpoint_path.trim_start_matches('/')
        )
    }
}

struct InFlight {
    active: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap();
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap();
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// Client for a completion endpoint that accepts a prompt plus the six
/// decoding parameters and answers with `{"choices":[{"text":...}]}`.
pub struct LiveBackend {
    config: LiveConfig,
    api_key: String,
    transport: Arc<dyn Transport>,
    in_flight: InFlight,
}

impl LiveBackend {
    pub fn new(config: LiveConfig, api_key: String, transport: Arc<dyn Transport>) -> Self {
        let limit = config.max_in_flight.max(1);
        Self {
            config,
            api_key,
            transport,
            in_flight: InFlight {
                active: Mutex::new(0),
                freed: Condvar::new(),
                limit,
            },
        }
    }

    /// Reads the credential from [`API_KEY_ENV`].
    pub fn from_env(
        config: LiveConfig,
        transport: Arc<dyn Transport>,
    ) -> Result<Self, BackendError> {
        match std::env::var(API_KEY_ENV) {
            Ok(key) if !key.trim().is_empty() => Ok(Self::new(config, key, transport)),
            _ => Err(BackendError::Auth {
                env_var: API_KEY_ENV,
                message: "credential is not set".into(),
            }),
        }
    }

    pub fn request_body(prompt: &str, params: &CompletionParams) -> Value {
        json!({
            "model": params.engine,
            "prompt": prompt,
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "frequency_penalty": params.frequency_penalty,
            "presence_penalty": params.presence_penalty,
            "best_of": params.best_of,
        })
    }
}

fn completion_text(body: &str) -> Result<String, BackendError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
    value
        .pointer("/choices/0/text")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::InvalidResponse("missing choices[0].text".into()))
}

enum Attempt {
    Done(Result<String, BackendError>),
    Retry {
        error: BackendError,
        hint: Option<Duration>,
    },
}

impl LiveBackend {
    fn attempt(&self, url: &str, body: &Value, attempts: u32) -> Attempt {
        let response = match self
            .transport
            .post_json(url, &self.api_key, body, self.config.timeout)
        {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry {
                    error: BackendError::Transport {
                        message: e.0,
                        attempts,
                    },
                    hint: None,
                }
            }
        };
        match response.status {
            200..=299 => Attempt::Done(completion_text(&response.body)),
            401 | 403 => Attempt::Done(Err(BackendError::Auth {
                env_var: API_KEY_ENV,
                message: format!("HTTP {}", response.status),
            })),
            429 => Attempt::Retry {
                error: BackendError::RateLimited { attempts },
                hint: response.retry_after,
            },
            500..=599 => Attempt::Retry {
                error: BackendError::Transport {
                    message: format!("HTTP {}", response.status),
                    attempts,
                },
                hint: response.retry_after,
            },
            status => Attempt::Done(Err(BackendError::Http {
                status,
                body: response.body,
            })),
        }
    }
}

impl CompletionBackend for LiveBackend {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, BackendError> {
        check_request(prompt, params)?;
        let url = self.config.url();
        let body = Self::request_body(prompt, params);
        let max_attempts = self.config.retry.max_attempts.max(1);
        let mut attempts = 0;
        loop {
            attempts += 1;
            let outcome = {
                let _permit = self.in_flight.acquire();
                self.attempt(&url, &body, attempts)
            };
            match outcome {
                Attempt::Done(result) => return result,
                Attempt::Retry { error, .. } if attempts >= max_attempts => return Err(error),
                Attempt::Retry { error, hint } => {
                    let delay = self.config.retry.delay(attempts - 1, hint);
                    log::warn!(
                        "completion attempt {attempts} failed ({error}); retrying in {delay:?}"
                    );
                    std::thread::sleep(delay);
                }
            }
        }
    }
}
