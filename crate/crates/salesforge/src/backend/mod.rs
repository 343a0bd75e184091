//! Uniform chat-completion abstraction over an OpenAI-compatible HTTP
//! endpoint and a deterministic mock, with retry, bounded concurrency, and
//! audit logging.
//!
//! A [`Backend`] handle is shareable across workers; `complete` may be
//! invoked concurrently. The audit log is internally synchronized and the
//! mock's queue mode serializes consumption.

mod audit;
mod http;
mod mock;

use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use audit::{AuditEntry, AuditLog};
pub use http::HttpConfig;
pub use mock::{load_mock_script, MockBackend};

/// Environment variable holding the bearer credential for HTTP backends.
pub const API_KEY_ENV: &str = "SALESFORGE_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<ChatMessage>,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CompletionRequest {
    /// Stable hash of the serialized request, used for audit records and for
    /// fingerprint-keyed mock scripts.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serializes");
        let digest = Sha256::digest(&canonical);
        hex::encode(&digest[..16])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub finish_reason: String,
    pub request_fingerprint: String,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed reply: {detail}")]
    MalformedReply { detail: String },
    #[error("mock script has no reply for this call (fingerprint {fingerprint})")]
    MockExhausted { fingerprint: String },
    #[error("{path}:{line}: bad mock script entry: {message}")]
    ScriptParse { path: String, line: usize, message: String },
    #[error("missing credential: set {0}")]
    MissingCredential(&'static str),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl BackendError {
    fn transient(&self) -> bool {
        matches!(
            self,
            BackendError::Transport { .. } | BackendError::RateLimited { .. }
        )
    }
}

/// Retry schedule for transient failures: exponential backoff with a
/// deterministic +/- jitter fraction derived from the request fingerprint,
/// so no RNG state is consumed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 5, initial_backoff_ms: 1_000, jitter: 0.2 }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32, fingerprint: &str) -> Duration {
        let base = self.initial_backoff_ms as f64 * 2f64.powi(attempt.saturating_sub(1) as i32);
        let mut h: u64 = 0xcbf29ce484222325;
        for b in fingerprint.bytes().chain([attempt as u8]) {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64; // [0, 1)
        let factor = 1.0 + self.jitter * (2.0 * unit - 1.0);
        Duration::from_millis((base * factor).max(0.0) as u64)
    }
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(cap: usize) -> Gate {
        Gate { permits: Mutex::new(cap.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.gate.permits.lock().unwrap() += 1;
        self.gate.cv.notify_one();
    }
}

enum Inner {
    Http(http::HttpClient),
    Mock(MockBackend),
}

/// A configured chat-completion backend.
pub struct Backend {
    inner: Inner,
    retry: RetryPolicy,
    audit: Option<AuditLog>,
    gate: Gate,
}

impl Backend {
    pub fn http(config: HttpConfig) -> Result<Backend, BackendError> {
        let concurrency = config.concurrency;
        let retry = config.retry.clone();
        Ok(Backend {
            inner: Inner::Http(http::HttpClient::new(config)?),
            retry,
            audit: None,
            gate: Gate::new(concurrency),
        })
    }

    pub fn mock(script_path: &Path) -> Result<Backend, BackendError> {
        Ok(Backend::from_mock(load_mock_script(script_path)?))
    }

    pub fn from_mock(mock: MockBackend) -> Backend {
        Backend {
            inner: Inner::Mock(mock),
            retry: RetryPolicy::default(),
            audit: None,
            gate: Gate::new(1),
        }
    }

    pub fn with_audit(mut self, audit: AuditLog) -> Backend {
        self.audit = Some(audit);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Backend {
        self.retry = retry;
        self
    }

    pub fn is_mock(&self) -> bool {
        matches!(self.inner, Inner::Mock(_))
    }

    /// Send a completion request, retrying transient failures with backoff.
    /// Every attempt is appended to the audit log when one is configured.
    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let _permit = self.gate.acquire();
        let fingerprint = req.fingerprint();
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let started = Instant::now();
            let result = match &self.inner {
                Inner::Http(client) => client.send(req),
                Inner::Mock(mock) => mock.reply(req, &fingerprint),
            };
            let latency_ms = started.elapsed().as_millis() as u64;

            if let Some(audit) = &self.audit {
                audit.record(AuditEntry {
                    fingerprint: fingerprint.clone(),
                    model: req.model_name.clone(),
                    attempt,
                    latency_ms,
                    outcome: match &result {
                        Ok(_) => "ok".into(),
                        Err(e) => format!("error: {e}"),
                    },
                    truncated: matches!(&result, Ok(r) if r.finish_reason == "length"),
                    ts_ms: audit::now_ms(),
                });
            }

            match result {
                Ok(mut response) => {
                    if response.text.is_empty() {
                        return Err(BackendError::MalformedReply {
                            detail: "empty completion text".into(),
                        });
                    }
                    response.request_fingerprint = fingerprint;
                    return Ok(response);
                }
                Err(e) if e.transient() && attempt < self.retry.max_attempts => {
                    std::thread::sleep(self.retry.backoff(attempt, &fingerprint));
                }
                Err(e) => {
                    return Err(match e {
                        BackendError::Transport { message, .. } => {
                            BackendError::Transport { attempts: attempt, message }
                        }
                        BackendError::RateLimited { .. } => {
                            BackendError::RateLimited { attempts: attempt }
                        }
                        other => other,
                    });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(text: &str) -> CompletionRequest {
        CompletionRequest {
            messages: vec![ChatMessage::user(text)],
            model_name: "test-model".into(),
            temperature: 0.7,
            max_tokens: 64,
            seed: None,
        }
    }

    #[test]
    fn fingerprint_is_stable_and_input_sensitive() {
        let a = request("hello").fingerprint();
        let b = request("hello").fingerprint();
        let c = request("other").fingerprint();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 32);
    }

    #[test]
    fn backoff_is_deterministic_and_bounded() {
        let policy = RetryPolicy { max_attempts: 5, initial_backoff_ms: 1_000, jitter: 0.2 };
        let fp = request("x").fingerprint();
        let d1 = policy.backoff(1, &fp);
        assert_eq!(d1, policy.backoff(1, &fp));
        assert!(d1 >= Duration::from_millis(800) && d1 <= Duration::from_millis(1200));
        let d3 = policy.backoff(3, &fp);
        assert!(d3 >= Duration::from_millis(3200) && d3 <= Duration::from_millis(4800));
    }

    #[test]
    fn gate_limits_and_releases() {
        let gate = Gate::new(2);
        let a = gate.acquire();
        let _b = gate.acquire();
        drop(a);
        let _c = gate.acquire();
        assert_eq!(*gate.permits.lock().unwrap(), 0);
    }
}
