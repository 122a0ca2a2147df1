use std::time::{Duration, Instant};

use ambig_core::prompts::{ChatMessage, RenderedPrompt};
use async_trait::async_trait;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{estimate_messages, GenerationConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("request timed out")]
    Timeout,
    #[error("request rejected: {0}")]
    InvalidRequest(String),
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("input is {tokens} tokens, over the max_input_tokens limit of {limit}")]
    InputTooLong { tokens: usize, limit: usize },
    #[error("{0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::RateLimited { .. } | BackendError::Transient(_) | BackendError::Timeout
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    /// The sentence being translated, for backends that work from it
    /// directly. Never sent over the wire.
    #[serde(skip)]
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub text: String,
}

/// Backends are shared across concurrent requests.
#[async_trait]
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> String;

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;

    /// Whether measured latencies are meaningful. Backends answering
    /// in-process report 0 so their artifacts stay byte-identical.
    fn reports_latency(&self) -> bool {
        true
    }
}

/// One request/response round, as stored in run files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: Vec<ChatMessage>,
    pub response_text: String,
    pub latency_ms: u64,
    pub backend: String,
    /// 1 for a first-try success.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Backoff before each retry; its length is the retry limit.
    pub delays: Vec<Duration>,
    /// Relative jitter applied to each delay (0.2 = ±20%).
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            delays: [1, 4, 16].map(Duration::from_secs).to_vec(),
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            delays: Vec::new(),
            jitter: 0.0,
        }
    }

    /// Same number of retries with no waiting (tests).
    pub fn immediate(retries: usize) -> Self {
        RetryPolicy {
            delays: vec![Duration::ZERO; retries],
            jitter: 0.0,
        }
    }

    fn delay(&self, retry: usize, hint: Option<Duration>) -> Duration {
        let base = self.delays[retry];
        let factor = if self.jitter > 0.0 {
            rand::thread_rng().gen_range(1.0 - self.jitter..=1.0 + self.jitter)
        } else {
            1.0
        };
        let d = base.mul_f64(factor);
        hint.map_or(d, |h| h.max(d))
    }
}

/// Sends a rendered prompt, retrying transient failures.
pub async fn complete(
    backend: &dyn ChatBackend,
    prompt: &RenderedPrompt,
    cfg: &GenerationConfig,
    policy: &RetryPolicy,
) -> Result<ChatExchange, BackendError> {
    complete_messages(
        backend,
        prompt.wire_messages(),
        &prompt.source,
        cfg,
        cfg.input_limit(prompt.template),
        policy,
    )
    .await
}

/// Sends `messages` as is. Inputs over `input_limit` estimated tokens are
/// rejected before anything is sent.
pub async fn complete_messages(
    backend: &dyn ChatBackend,
    messages: Vec<ChatMessage>,
    source: &str,
    cfg: &GenerationConfig,
    input_limit: usize,
    policy: &RetryPolicy,
) -> Result<ChatExchange, BackendError> {
    let tokens = estimate_messages(&messages);
    if tokens > input_limit {
        return Err(BackendError::InputTooLong {
            tokens,
            limit: input_limit,
        });
    }
    let request = ChatRequest {
        model: cfg.model_name.clone(),
        messages,
        temperature: cfg.temperature,
        top_p: cfg.top_p,
        max_tokens: cfg.max_output_tokens,
        source: source.to_string(),
    };
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        let start = Instant::now();
        match backend.complete(&request).await {
            Ok(resp) => {
                let latency_ms = if backend.reports_latency() {
                    start.elapsed().as_millis() as u64
                } else {
                    0
                };
                return Ok(ChatExchange {
                    request: request.messages,
                    response_text: resp.text,
                    latency_ms,
                    backend: backend.name(),
                    attempt,
                });
            }
            Err(e) if e.is_retryable() && (attempt as usize) <= policy.delays.len() => {
                let hint = match &e {
                    BackendError::RateLimited { retry_after } => *retry_after,
                    _ => None,
                };
                let wait = policy.delay(attempt as usize - 1, hint);
                tracing::warn!(attempt, error = %e, wait_ms = wait.as_millis() as u64, "retrying");
                tokio::time::sleep(wait).await;
            }
            Err(e) => return Err(e),
        }
    }
}
