use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ModelConfig;

/// An image attached to a prompt. The reference is informational; the cache
/// key is computed over the bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageInput {
    pub reference: String,
    pub mime: String,
    pub bytes: Arc<Vec<u8>>,
}

impl ImageInput {
    pub fn png(reference: impl Into<String>, bytes: Vec<u8>) -> Self {
        ImageInput {
            reference: reference.into(),
            mime: "image/png".to_string(),
            bytes: Arc::new(bytes),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub prompt: String,
    pub images: Vec<ImageInput>,
    /// Retry ordinal of the caller's validation loop. Part of the cache key,
    /// so a re-asked question gets its own cached answer.
    pub attempt: u32,
}

impl ChatRequest {
    pub fn text(prompt: impl Into<String>) -> Self {
        ChatRequest {
            prompt: prompt.into(),
            images: Vec::new(),
            attempt: 0,
        }
    }

    pub fn with_attempt(mut self, attempt: u32) -> Self {
        self.attempt = attempt;
        self
    }

    pub fn with_image(mut self, image: ImageInput) -> Self {
        self.images.push(image);
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

impl ProviderReply {
    pub fn text(text: impl Into<String>) -> Self {
        ProviderReply {
            text: text.into(),
            usage: None,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("rate limited")]
    RateLimited,
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("request rejected: {0}")]
    Fatal(String),
    #[error("malformed provider payload: {0}")]
    Protocol(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::RateLimited | ProviderError::Transient(_))
    }
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    async fn send(&self, config: &ModelConfig, request: &ChatRequest) -> Result<ProviderReply, ProviderError>;
}

type ScriptFn = dyn Fn(&ChatRequest) -> Result<ProviderReply, ProviderError> + Send + Sync;

/// A provider backed by a plain function of the request. Useful for offline
/// runs and for tests.
#[derive(Clone)]
pub struct ScriptedProvider {
    script: Arc<ScriptFn>,
}

impl ScriptedProvider {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<ProviderReply, ProviderError> + Send + Sync + 'static,
    {
        ScriptedProvider { script: Arc::new(f) }
    }

    /// Always answers with the same text.
    pub fn fixed(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::new(move |_| Ok(ProviderReply::text(text.clone())))
    }
}

#[async_trait]
impl ChatProvider for ScriptedProvider {
    async fn send(&self, _config: &ModelConfig, request: &ChatRequest) -> Result<ProviderReply, ProviderError> {
        (self.script)(request)
    }
}
