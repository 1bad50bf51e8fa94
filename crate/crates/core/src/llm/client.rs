use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use super::{cache_key, ChatProvider, ChatRequest, ModelConfig, ProviderError, ResponseCache, TokenUsage};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("{model}: giving up after {attempts} attempts: {last}")]
    Transport {
        model: String,
        attempts: u32,
        last: ProviderError,
    },
    #[error("{model}: protocol error: {message}")]
    Protocol { model: String, message: String },
    #[error("{model}: request rejected: {message}")]
    Rejected { model: String, message: String },
    #[error("invalid model config: {0}")]
    Config(String),
}

/// One prompt/response pair as persisted in the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub prompt: String,
    #[serde(default)]
    pub images: Vec<String>,
    pub response: String,
    pub model: String,
    pub cache_key: String,
    #[serde(default)]
    pub attempt: u32,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
    /// True when this value was served from the cache.
    #[serde(skip)]
    pub cached: bool,
}

#[derive(Debug, Default)]
struct Counters {
    network_calls: AtomicU64,
    cache_hits: AtomicU64,
}

/// Shareable across tasks; clones share the semaphore, cache and counters.
#[derive(Clone)]
pub struct LlmClient {
    config: Arc<ModelConfig>,
    provider: Arc<dyn ChatProvider>,
    cache: Option<ResponseCache>,
    permits: Arc<Semaphore>,
    counters: Arc<Counters>,
}

impl LlmClient {
    pub fn new(
        config: ModelConfig,
        provider: Arc<dyn ChatProvider>,
        cache: Option<ResponseCache>,
    ) -> Result<Self, LlmError> {
        config.validate().map_err(LlmError::Config)?;
        let permits = Arc::new(Semaphore::new(config.max_in_flight));
        Ok(LlmClient {
            config: Arc::new(config),
            provider,
            cache,
            permits,
            counters: Arc::default(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Number of requests that reached the provider (retries included).
    pub fn network_calls(&self) -> u64 {
        self.counters.network_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.counters.cache_hits.load(Ordering::Relaxed)
    }

    pub fn cache_key(&self, request: &ChatRequest) -> String {
        cache_key(&self.config, request)
    }

    pub async fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, LlmError> {
        let key = self.cache_key(request);
        if let Some(cache) = &self.cache {
            if let Some(mut hit) = cache.get(&self.config.model, &key) {
                self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
                hit.cached = true;
                return Ok(hit);
            }
        }

        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        let started = Instant::now();
        let mut retries = 0;
        let reply = loop {
            self.counters.network_calls.fetch_add(1, Ordering::Relaxed);
            match self.provider.send(&self.config, request).await {
                Ok(reply) => break reply,
                Err(e) if e.is_retryable() && retries < self.config.max_retries => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << retries.min(16));
                    log::warn!("{}: {e}; retry {} in {wait} ms", self.config.model, retries + 1);
                    tokio::time::sleep(Duration::from_millis(wait)).await;
                    retries += 1;
                }
                Err(e) if e.is_retryable() => {
                    return Err(LlmError::Transport {
                        model: self.config.model.clone(),
                        attempts: retries + 1,
                        last: e,
                    })
                }
                Err(ProviderError::Protocol(message)) => {
                    return Err(LlmError::Protocol {
                        model: self.config.model.clone(),
                        message,
                    })
                }
                Err(e) => {
                    let message = match e {
                        ProviderError::Fatal(m) => m,
                        other => other.to_string(),
                    };
                    return Err(LlmError::Rejected {
                        model: self.config.model.clone(),
                        message,
                    });
                }
            }
        };

        let exchange = ChatExchange {
            prompt: request.prompt.clone(),
            images: request.images.iter().map(|i| i.reference.clone()).collect(),
            response: reply.text,
            model: self.config.model.clone(),
            cache_key: key,
            attempt: request.attempt,
            latency_ms: started.elapsed().as_millis() as u64,
            usage: reply.usage,
            cached: false,
        };
        if let Some(cache) = &self.cache {
            if let Err(e) = cache.put(&exchange) {
                log::warn!("could not persist cache entry {}: {e}", exchange.cache_key);
            }
        }
        Ok(exchange)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ProviderReply, ScriptedProvider};
    use std::sync::atomic::AtomicUsize;

    fn config() -> ModelConfig {
        let mut c = ModelConfig::new("http://unused", "stub-model");
        c.backoff_ms = 1;
        c
    }

    #[tokio::test]
    async fn stub_text_is_returned() {
        let client = LlmClient::new(config(), Arc::new(ScriptedProvider::fixed("fixed text")), None).unwrap();
        let ex = client.complete(&ChatRequest::text("hello")).await.unwrap();
        assert_eq!(ex.response, "fixed text");
        assert_eq!(ex.model, "stub-model");
        assert!(!ex.cached);
    }

    #[tokio::test]
    async fn second_identical_call_is_served_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let calls = Arc::new(AtomicUsize::new(0));
        let c2 = calls.clone();
        let provider = ScriptedProvider::new(move |r| {
            c2.fetch_add(1, Ordering::SeqCst);
            Ok(ProviderReply::text(format!("echo {}", r.prompt)))
        });
        let client = LlmClient::new(config(), Arc::new(provider), Some(ResponseCache::new(dir.path()))).unwrap();
        let a = client.complete(&ChatRequest::text("p")).await.unwrap();
        let b = client.complete(&ChatRequest::text("p")).await.unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(a.response, b.response);
        assert!(b.cached);
        assert_eq!(client.cache_hits(), 1);
        assert!(dir.path().join("stub-model").join(format!("{}.json", a.cache_key)).is_file());
    }

    #[tokio::test]
    async fn retries_rate_limit_then_succeeds() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c2 = calls.clone();
        let provider = ScriptedProvider::new(move |_| {
            if c2.fetch_add(1, Ordering::SeqCst) == 0 {
                Err(ProviderError::RateLimited)
            } else {
                Ok(ProviderReply::text("ok"))
            }
        });
        let client = LlmClient::new(config(), Arc::new(provider), None).unwrap();
        let ex = client.complete(&ChatRequest::text("p")).await.unwrap();
        assert_eq!(ex.response, "ok");
        assert_eq!(client.network_calls(), 2);
    }

    #[tokio::test]
    async fn exhausted_retries_is_transport_error() {
        let mut cfg = config();
        cfg.max_retries = 2;
        let provider = ScriptedProvider::new(|_| Err(ProviderError::Transient("down".into())));
        let client = LlmClient::new(cfg, Arc::new(provider), None).unwrap();
        let err = client.complete(&ChatRequest::text("p")).await.unwrap_err();
        assert!(matches!(err, LlmError::Transport { attempts: 3, .. }));
        assert_eq!(client.network_calls(), 3);
    }

    #[tokio::test]
    async fn protocol_errors_are_not_retried() {
        let provider = ScriptedProvider::new(|_| Err(ProviderError::Protocol("bad json".into())));
        let client = LlmClient::new(config(), Arc::new(provider), None).unwrap();
        assert!(matches!(
            client.complete(&ChatRequest::text("p")).await,
            Err(LlmError::Protocol { .. })
        ));
        assert_eq!(client.network_calls(), 1);
    }

    #[tokio::test]
    async fn in_flight_requests_are_bounded() {
        let mut cfg = config();
        cfg.max_in_flight = 2;
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        struct Slow {
            live: Arc<AtomicUsize>,
            peak: Arc<AtomicUsize>,
        }
        #[async_trait::async_trait]
        impl ChatProvider for Slow {
            async fn send(&self, _: &ModelConfig, r: &ChatRequest) -> Result<ProviderReply, ProviderError> {
                let now = self.live.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(now, Ordering::SeqCst);
                tokio::time::sleep(Duration::from_millis(20)).await;
                self.live.fetch_sub(1, Ordering::SeqCst);
                Ok(ProviderReply::text(r.prompt.clone()))
            }
        }
        let client = LlmClient::new(
            cfg,
            Arc::new(Slow {
                live: live.clone(),
                peak: peak.clone(),
            }),
            None,
        )
        .unwrap();
        let futs = (0..8).map(|i| {
            let c = client.clone();
            async move { c.complete(&ChatRequest::text(format!("p{i}"))).await }
        });
        let results = futures::future::join_all(futs).await;
        assert!(results.iter().all(|r| r.is_ok()));
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
