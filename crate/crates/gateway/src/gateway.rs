//! Backend registry with per-backend concurrency limits and instrumentation.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use tokio::sync::Semaphore;

use crate::{Backend, BackendError, GenerationRequest};

/// Counters exposed for cache-replay and concurrency checks.
#[derive(Debug, Default)]
pub struct GatewayMetrics {
    calls: AtomicU64,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl GatewayMetrics {
    /// Total backend invocations (cache hits never reach the gateway).
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// High-water mark of concurrently outstanding backend calls.
    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    fn enter(&self) {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
    }

    fn exit(&self) {
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

struct RegisteredBackend {
    backend: Arc<dyn Backend>,
    limiter: Arc<Semaphore>,
}

/// Routes generation requests to registered backends, bounding the number
/// of outstanding calls per backend.
#[derive(Default)]
pub struct Gateway {
    backends: BTreeMap<String, RegisteredBackend>,
    metrics: Arc<GatewayMetrics>,
}

impl Gateway {
    pub fn new() -> Self {
        Gateway::default()
    }

    pub fn register(&mut self, backend: Arc<dyn Backend>, max_in_flight: usize) {
        assert!(max_in_flight >= 1, "max_in_flight must be at least 1");
        self.backends.insert(
            backend.id().to_string(),
            RegisteredBackend {
                backend,
                limiter: Arc::new(Semaphore::new(max_in_flight)),
            },
        );
    }

    pub fn metrics(&self) -> Arc<GatewayMetrics> {
        Arc::clone(&self.metrics)
    }

    pub fn has_backend(&self, backend_id: &str) -> bool {
        self.backends.contains_key(backend_id)
    }

    /// Issue one generation call, waiting for an in-flight slot.
    pub async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let registered =
            self.backends
                .get(&request.backend_id)
                .ok_or_else(|| BackendError::NotConfigured {
                    backend_id: request.backend_id.clone(),
                })?;
        if request.prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        if request.sampling.max_new_tokens == 0 {
            return Err(BackendError::InvalidSampling {
                detail: "max_new_tokens must be at least 1".to_string(),
            });
        }
        if request.sampling.temperature.is_nan() || request.sampling.temperature < 0.0 {
            return Err(BackendError::InvalidSampling {
                detail: format!("temperature {} must be >= 0", request.sampling.temperature),
            });
        }
        let _permit = registered
            .limiter
            .acquire()
            .await
            .expect("gateway semaphore never closes");
        self.metrics.enter();
        let result = registered.backend.generate(request).await;
        self.metrics.exit();
        result
    }

    /// Issue a batch concurrently. Results are positionally aligned with the
    /// requests regardless of completion order, and per-item failures are
    /// reported in place without aborting the rest of the batch.
    pub async fn generate_batch(
        &self,
        requests: &[GenerationRequest],
    ) -> Vec<Result<String, BackendError>> {
        futures::future::join_all(requests.iter().map(|request| self.generate(request))).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::{MockBackend, MockRule, MockScript};
    use crate::SamplingParams;

    fn mock_gateway(latency_ms: u64, max_in_flight: usize) -> Gateway {
        let script = MockScript {
            rules: vec![MockRule {
                matcher: String::new(),
                success_prob: 1.0,
                correct_completion: "ok".to_string(),
                wrong_completion: "no".to_string(),
            }],
            seed: 5,
            latency_ms,
        };
        let mut gateway = Gateway::new();
        gateway.register(Arc::new(MockBackend::new("mock", script).unwrap()), max_in_flight);
        gateway
    }

    fn request(prompt: &str, index: u32) -> GenerationRequest {
        GenerationRequest {
            backend_id: "mock".to_string(),
            prompt: prompt.to_string(),
            sampling: SamplingParams::default(),
            index,
        }
    }

    #[tokio::test]
    async fn batch_preserves_request_order() {
        let gateway = mock_gateway(0, 4);
        let requests: Vec<GenerationRequest> =
            (0..64).map(|i| request("same prompt", i)).collect();
        let results = gateway.generate_batch(&requests).await;
        assert_eq!(results.len(), 64);
        for result in results {
            assert_eq!(result.unwrap(), "ok");
        }
        assert_eq!(gateway.metrics().calls(), 64);
    }

    #[tokio::test]
    async fn empty_batch_is_empty() {
        let gateway = mock_gateway(0, 4);
        let results = gateway.generate_batch(&[]).await;
        assert!(results.is_empty());
        assert_eq!(gateway.metrics().calls(), 0);
    }

    #[tokio::test]
    async fn unknown_backend_and_empty_prompt_fail_per_item() {
        let gateway = mock_gateway(0, 4);
        let mut bad = request("fine", 0);
        bad.backend_id = "missing".to_string();
        let empty = GenerationRequest {
            prompt: String::new(),
            ..request("x", 1)
        };
        let mut zero_budget = request("y", 2);
        zero_budget.sampling.max_new_tokens = 0;
        let mut negative_temperature = request("z", 3);
        negative_temperature.sampling.temperature = -0.5;
        let results = gateway
            .generate_batch(&[request("fine", 0), bad, empty, zero_budget, negative_temperature])
            .await;
        assert!(results[0].is_ok());
        assert!(matches!(results[1], Err(BackendError::NotConfigured { .. })));
        assert!(matches!(results[2], Err(BackendError::EmptyPrompt)));
        assert!(matches!(results[3], Err(BackendError::InvalidSampling { .. })));
        assert!(matches!(results[4], Err(BackendError::InvalidSampling { .. })));
    }

    #[tokio::test]
    async fn in_flight_stays_within_bound() {
        let bound = 3;
        let gateway = mock_gateway(20, bound);
        let requests: Vec<GenerationRequest> =
            (0..24).map(|i| request("slow prompt", i)).collect();
        let results = gateway.generate_batch(&requests).await;
        assert!(results.iter().all(Result::is_ok));
        let watermark = gateway.metrics().max_in_flight();
        assert!(watermark <= bound, "watermark {watermark} exceeded bound {bound}");
        assert!(watermark >= 2, "test never achieved concurrency");
    }
}
