//! Deterministic scripted backend.
//!
//! Completions are a pure function of (script, script seed, prompt
//! fingerprint, rollout index): the per-call RNG is seeded from a digest of
//! those inputs, so two runs with the same script produce byte-identical
//! completion streams regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::{Backend, BackendError, GenerationRequest, prompt_fingerprint};

/// One scripted behavior: when the prompt contains `matcher`, answer
/// correctly with probability `success_prob`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    /// Substring matched against the rendered prompt; empty matches any
    /// prompt, so a final empty matcher acts as the required catch-all.
    pub matcher: String,
    pub success_prob: f64,
    pub correct_completion: String,
    pub wrong_completion: String,
}

/// A full mock configuration: ordered rules plus the script-level seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
    pub seed: u64,
    /// Artificial per-call latency, for exercising concurrency limits.
    #[serde(default)]
    pub latency_ms: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MockScriptError {
    #[error("rule {index} has success_prob {value} outside [0, 1]")]
    BadProbability { index: usize, value: f64 },
    #[error("script needs a catch-all rule (empty matcher) so every prompt matches")]
    NoCatchAll,
}

impl MockScript {
    pub fn validate(&self) -> Result<(), MockScriptError> {
        for (index, rule) in self.rules.iter().enumerate() {
            if !(0.0..=1.0).contains(&rule.success_prob) {
                return Err(MockScriptError::BadProbability {
                    index,
                    value: rule.success_prob,
                });
            }
        }
        if !self.rules.iter().any(|r| r.matcher.is_empty()) {
            return Err(MockScriptError::NoCatchAll);
        }
        Ok(())
    }
}

pub struct MockBackend {
    backend_id: String,
    script: MockScript,
}

impl MockBackend {
    pub fn new(backend_id: impl Into<String>, script: MockScript) -> Result<Self, MockScriptError> {
        script.validate()?;
        Ok(MockBackend {
            backend_id: backend_id.into(),
            script,
        })
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    /// The uniform draw deciding success for one call, derived from the
    /// script seed, the prompt fingerprint, and the rollout index.
    fn success_draw(&self, request: &GenerationRequest) -> f64 {
        let fingerprint = prompt_fingerprint(&request.prompt, &request.sampling);
        let mut hasher = Sha256::new();
        hasher.update(b"mock-rollout-v1");
        hasher.update(self.script.seed.to_le_bytes());
        hasher.update(fingerprint);
        hasher.update(request.index.to_le_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        rng.gen::<f64>()
    }
}

#[async_trait::async_trait]
impl Backend for MockBackend {
    fn id(&self) -> &str {
        &self.backend_id
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        if self.script.latency_ms > 0 {
            tokio::time::sleep(std::time::Duration::from_millis(self.script.latency_ms)).await;
        }
        let rule = self
            .script
            .rules
            .iter()
            .find(|r| request.prompt.contains(&r.matcher))
            .expect("validated script has a catch-all rule");
        let completion = if self.success_draw(request) < rule.success_prob {
            &rule.correct_completion
        } else {
            &rule.wrong_completion
        };
        Ok(completion.clone())
    }
}
