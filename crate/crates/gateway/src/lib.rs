//! Uniform interface over text-generation backends.
//!
//! Two implementations ship: a live HTTP chat-completions client with
//! retries and timeouts, and a deterministic scripted mock for desk-scale
//! runs. The [`Gateway`] fronts both, enforcing a per-backend in-flight
//! bound and exposing call counters for cache and determinism checks.

mod gateway;
mod http;
mod mock;

pub use gateway::{Gateway, GatewayMetrics};
pub use http::{HttpBackend, HttpBackendConfig, RetryPolicy, API_KEY_ENV_VAR};
pub use mock::{MockBackend, MockRule, MockScript, MockScriptError};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Sampling controls forwarded to a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_new_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SamplingParams {
    /// Stable textual form used in digests.
    pub fn canonical(&self) -> String {
        format!(
            "temperature={:?};max_new_tokens={};seed={:?}",
            self.temperature, self.max_new_tokens, self.seed
        )
    }
}

impl Default for SamplingParams {
    fn default() -> Self {
        // 16k reasoning budget; temperature comes from per-backend config.
        SamplingParams {
            temperature: 1.0,
            max_new_tokens: 16384,
            seed: None,
        }
    }
}

/// One generation call: a rendered prompt plus its rollout ordinal.
///
/// Rollout independence comes from distinct `index` values (and seeds where
/// the endpoint supports them), never from mutating the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub backend_id: String,
    pub prompt: String,
    pub sampling: SamplingParams,
    pub index: u32,
}

/// 256-bit digest over the rendered prompt and sampling parameters.
pub fn prompt_fingerprint(prompt: &str, sampling: &SamplingParams) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hasher.update([0x1e]);
    hasher.update(sampling.canonical().as_bytes());
    hasher.finalize().into()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("no backend configured under id {backend_id:?}")]
    NotConfigured { backend_id: String },
    #[error("prompt must be non-empty")]
    EmptyPrompt,
    #[error("invalid sampling parameters: {detail}")]
    InvalidSampling { detail: String },
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("request timed out after {attempts} attempt(s) ({timeout_ms} ms each)")]
    Timeout { attempts: u32, timeout_ms: u64 },
    #[error("backend returned HTTP {status}: {detail}")]
    Protocol { status: u16, detail: String },
    #[error("unusable response body: {detail}")]
    MalformedResponse { detail: String },
}

/// A text-generation backend. Implementations must be safe for concurrent
/// calls; the gateway enforces the in-flight bound around them.
#[async_trait::async_trait]
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError>;
}
