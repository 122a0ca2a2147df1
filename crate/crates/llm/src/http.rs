//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use async_trait::async_trait;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use crate::backend::{BackendError, ChatBackend, ChatRequest, ChatResponse};

pub const API_KEY_VAR: &str = "AMBIG_API_KEY";
pub const API_BASE_VAR: &str = "AMBIG_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

pub struct HttpBackend {
    client: reqwest::Client,
    endpoint: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

impl HttpBackend {
    /// `base` is the API root, e.g. `https://host/v1`; requests go to
    /// `{base}/chat/completions`.
    pub fn new(
        base: &str,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(HttpBackend {
            client,
            endpoint: format!("{}/chat/completions", base.trim_end_matches('/')),
            api_key,
        })
    }

    /// Reads the credential from `AMBIG_API_KEY` (required) and the API
    /// root from `AMBIG_API_BASE`.
    pub fn from_env(timeout: Duration) -> Result<Self, BackendError> {
        let key = std::env::var(API_KEY_VAR)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| BackendError::Config(format!("{API_KEY_VAR} is not set")))?;
        let base = std::env::var(API_BASE_VAR).unwrap_or_else(|_| DEFAULT_API_BASE.to_string());
        Self::new(&base, Some(key), timeout)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

fn classify(status: StatusCode, retry_after: Option<Duration>, body: &str) -> BackendError {
    let snippet: String = body.chars().take(200).collect();
    match status.as_u16() {
        401 | 403 => BackendError::Auth(format!("{status}")),
        429 => BackendError::RateLimited { retry_after },
        408 => BackendError::Timeout,
        500..=599 => BackendError::Transient(format!("{status}: {snippet}")),
        _ => BackendError::InvalidRequest(format!("{status}: {snippet}")),
    }
}

#[async_trait]
impl ChatBackend for HttpBackend {
    fn name(&self) -> String {
        "openai".into()
    }

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        });
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transient(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            let retry_after = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            let text = resp.text().await.unwrap_or_default();
            return Err(classify(status, retry_after, &text));
        }
        let parsed: Completion = resp
            .json()
            .await
            .map_err(|e| BackendError::Decode(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Decode("no choices[0].message.content".into()))?;
        Ok(ChatResponse { text })
    }
}
