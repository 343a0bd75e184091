//! Blocking client for OpenAI-compatible `/chat/completions` endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatMessage, CompletionRequest, CompletionResponse, RetryPolicy, API_KEY_ENV};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    /// Bearer token; when `None`, read from `SALESFORGE_API_KEY`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            timeout_secs: 120,
            concurrency: 4,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(default)]
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

pub(super) struct HttpClient {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
}

impl HttpClient {
    pub(super) fn new(config: HttpConfig) -> Result<HttpClient, BackendError> {
        let api_key = match config.api_key {
            Some(k) => k,
            None => std::env::var(API_KEY_ENV)
                .map_err(|_| BackendError::MissingCredential(API_KEY_ENV))?,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport { attempts: 0, message: e.to_string() })?;
        Ok(HttpClient {
            client,
            base_url: config.base_url.trim_end_matches('/').to_string(),
            api_key,
        })
    }

    pub(super) fn send(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let body = WireRequest {
            model: &req.model_name,
            messages: &req.messages,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            seed: req.seed,
        };
        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Transport { attempts: 1, message: e.to_string() })?;

        let status = response.status();
        if status.as_u16() == 429 {
            return Err(BackendError::RateLimited { attempts: 1 });
        }
        if status.is_server_error() {
            return Err(BackendError::Transport {
                attempts: 1,
                message: format!("HTTP {status}"),
            });
        }
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(BackendError::Http { status: status.as_u16(), body });
        }

        let wire: WireResponse = response
            .json()
            .map_err(|e| BackendError::MalformedReply { detail: e.to_string() })?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or(BackendError::MalformedReply { detail: "no choices in reply".into() })?;
        let text = choice
            .message
            .content
            .filter(|t| !t.is_empty())
            .ok_or(BackendError::MalformedReply { detail: "missing choice text".into() })?;
        Ok(CompletionResponse {
            text,
            finish_reason: choice.finish_reason.unwrap_or_else(|| "stop".into()),
            request_fingerprint: String::new(),
        })
    }
}
