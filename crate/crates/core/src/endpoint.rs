//! JSON-over-HTTP scoring services (NLI, RQUGE, punctuation restoration,
//! similarity baselines). All of them share the same retry policy.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EndpointError {
    #[error("transport error talking to {url}: {message}")]
    Transport { url: String, message: String },
    #[error("{url} answered HTTP {status}")]
    Status { url: String, status: u16 },
    #[error("malformed response from {url}: {message}")]
    Protocol { url: String, message: String },
    #[error("endpoint not configured")]
    NotConfigured,
}

impl EndpointError {
    fn retryable(&self) -> bool {
        match self {
            EndpointError::Transport { .. } => true,
            EndpointError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Name of the environment variable holding a bearer token, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

fn default_timeout_s() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            timeout_s: default_timeout_s(),
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            api_key_env: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JsonEndpoint {
    config: EndpointConfig,
    http: reqwest::Client,
}

impl JsonEndpoint {
    pub fn new(config: EndpointConfig) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s.max(0.001)))
            .build()
            .expect("http client builds");
        JsonEndpoint { config, http }
    }

    pub fn url(&self) -> &str {
        &self.config.url
    }

    async fn post_once<Req: Serialize + ?Sized, Resp: DeserializeOwned>(
        &self,
        body: &Req,
    ) -> Result<Resp, EndpointError> {
        let url = &self.config.url;
        let mut req = self.http.post(url).json(body);
        if let Some(var) = &self.config.api_key_env {
            if let Ok(key) = std::env::var(var) {
                req = req.bearer_auth(key);
            }
        }
        let resp = req.send().await.map_err(|e| EndpointError::Transport {
            url: url.clone(),
            message: e.to_string(),
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(EndpointError::Status {
                url: url.clone(),
                status: status.as_u16(),
            });
        }
        let bytes = resp.bytes().await.map_err(|e| EndpointError::Transport {
            url: url.clone(),
            message: e.to_string(),
        })?;
        serde_json::from_slice(&bytes).map_err(|e| EndpointError::Protocol {
            url: url.clone(),
            message: e.to_string(),
        })
    }

    /// POSTs `body` and decodes the JSON reply, retrying rate limits, 5xx and
    /// transport failures with exponential backoff.
    pub async fn post<Req: Serialize + ?Sized, Resp: DeserializeOwned>(
        &self,
        body: &Req,
    ) -> Result<Resp, EndpointError> {
        let mut attempt = 0;
        loop {
            match self.post_once(body).await {
                Err(e) if e.retryable() && attempt < self.config.max_retries => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("{e}; retrying in {wait} ms");
                    tokio::time::sleep(Duration::from_millis(wait)).await;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}
