//! Live chat-completions backend over HTTP + JSON.
//!
//! The rendered prompt travels as a single user message; the completion is
//! the first choice's message content. Transport failures, timeouts, and
//! 5xx/429 responses are retried with full-jitter exponential backoff;
//! other statuses and unusable bodies are not — those are data.

use rand::Rng;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::{Backend, BackendError, GenerationRequest};

/// Environment variable holding the bearer token for the endpoint.
pub const API_KEY_ENV_VAR: &str = "CBU_GATEWAY_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            backoff_base_ms: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub backend_id: String,
    pub endpoint: String,
    pub model_name: String,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_max_in_flight() -> usize {
    8
}

fn default_timeout_ms() -> u64 {
    300_000
}

#[derive(Debug, Error)]
pub enum HttpBackendBuildError {
    #[error("max_in_flight must be at least 1")]
    ZeroInFlight,
    #[error("retry.max_attempts must be at least 1")]
    ZeroAttempts,
    #[error("failed to build HTTP client: {0}")]
    Client(String),
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::Client,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

enum AttemptOutcome {
    Done(String),
    Retryable(BackendError),
    Fatal(BackendError),
}

impl HttpBackend {
    /// Build the backend, reading the API key from `CBU_GATEWAY_API_KEY`
    /// when present.
    pub fn new(config: HttpBackendConfig) -> Result<Self, HttpBackendBuildError> {
        if config.max_in_flight == 0 {
            return Err(HttpBackendBuildError::ZeroInFlight);
        }
        if config.retry.max_attempts == 0 {
            return Err(HttpBackendBuildError::ZeroAttempts);
        }
        let client = reqwest::Client::builder()
            .timeout(std::time::Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| HttpBackendBuildError::Client(e.to_string()))?;
        let api_key = std::env::var(API_KEY_ENV_VAR).ok();
        Ok(HttpBackend {
            config,
            client,
            api_key,
        })
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }

    async fn attempt(&self, request: &GenerationRequest, attempts: u32) -> AttemptOutcome {
        let mut body = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.sampling.max_new_tokens,
            "temperature": request.sampling.temperature,
        });
        if let Some(seed) = request.sampling.seed {
            // Offset by the rollout index so repeats stay independent on
            // endpoints that honor seeds.
            body["seed"] = json!(seed.wrapping_add(u64::from(request.index)));
        }

        let mut http_request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            http_request = http_request.bearer_auth(key);
        }

        let response = match http_request.send().await {
            Ok(response) => response,
            Err(error) if error.is_timeout() => {
                return AttemptOutcome::Retryable(BackendError::Timeout {
                    attempts,
                    timeout_ms: self.config.timeout_ms,
                });
            }
            Err(error) => {
                return AttemptOutcome::Retryable(BackendError::Transport {
                    attempts,
                    detail: error.to_string(),
                });
            }
        };

        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            let detail = response.text().await.unwrap_or_default();
            return AttemptOutcome::Retryable(BackendError::Protocol {
                status: status.as_u16(),
                detail: truncate(&detail),
            });
        }
        if !status.is_success() {
            let detail = response.text().await.unwrap_or_default();
            return AttemptOutcome::Fatal(BackendError::Protocol {
                status: status.as_u16(),
                detail: truncate(&detail),
            });
        }

        match response.json::<ChatResponse>().await {
            Ok(parsed) => match parsed.choices.into_iter().next() {
                Some(choice) => AttemptOutcome::Done(choice.message.content),
                None => AttemptOutcome::Fatal(BackendError::MalformedResponse {
                    detail: "response had no choices".to_string(),
                }),
            },
            Err(error) => AttemptOutcome::Fatal(BackendError::MalformedResponse {
                detail: error.to_string(),
            }),
        }
    }
}

fn truncate(text: &str) -> String {
    const LIMIT: usize = 200;
    if text.len() <= LIMIT {
        text.to_string()
    } else {
        let mut end = LIMIT;
        while !text.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &text[..end])
    }
}

fn full_jitter_delay(base_ms: u64, attempt: u32) -> std::time::Duration {
    const CAP_MS: u64 = 30_000;
    let ceiling = base_ms.saturating_mul(1u64 << attempt.min(16)).min(CAP_MS);
    let jittered = rand::thread_rng().gen_range(0..=ceiling);
    std::time::Duration::from_millis(jittered)
}

#[async_trait::async_trait]
impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.config.backend_id
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let max_attempts = self.config.retry.max_attempts;
        let mut last_error = None;
        for attempt in 1..=max_attempts {
            match self.attempt(request, attempt).await {
                AttemptOutcome::Done(completion) => return Ok(completion),
                AttemptOutcome::Fatal(error) => return Err(error),
                AttemptOutcome::Retryable(error) => {
                    last_error = Some(error);
                    if attempt < max_attempts {
                        tokio::time::sleep(full_jitter_delay(
                            self.config.retry.backoff_base_ms,
                            attempt - 1,
                        ))
                        .await;
                    }
                }
            }
        }
        Err(match last_error.expect("at least one attempt ran") {
            BackendError::Timeout { timeout_ms, .. } => BackendError::Timeout {
                attempts: max_attempts,
                timeout_ms,
            },
            BackendError::Transport { detail, .. } => BackendError::Transport {
                attempts: max_attempts,
                detail,
            },
            other => other,
        })
    }
}
