use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{ChatProvider, ChatRequest, ModelConfig, ProviderError, ProviderReply, TokenUsage};

/// OpenAI-style `chat/completions` over HTTP JSON. Works with any server that
/// speaks the same wire format (vLLM, Together, OpenRouter, ...).
#[derive(Debug, Clone)]
pub struct OpenAiProvider {
    http: reqwest::Client,
}

impl Default for OpenAiProvider {
    fn default() -> Self {
        OpenAiProvider {
            http: reqwest::Client::new(),
        }
    }
}

impl OpenAiProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn request_body(config: &ModelConfig, request: &ChatRequest) -> Value {
        let content = if request.images.is_empty() {
            Value::String(request.prompt.clone())
        } else {
            let mut parts = vec![json!({"type": "text", "text": request.prompt})];
            for img in &request.images {
                let b64 = base64::engine::general_purpose::STANDARD.encode(img.bytes.as_slice());
                parts.push(json!({
                    "type": "image_url",
                    "image_url": {"url": format!("data:{};base64,{b64}", img.mime)}
                }));
            }
            Value::Array(parts)
        };
        json!({
            "model": config.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
        })
    }

    pub fn parse_reply(body: &[u8]) -> Result<ProviderReply, ProviderError> {
        #[derive(Deserialize)]
        struct Message {
            content: Option<String>,
        }
        #[derive(Deserialize)]
        struct Choice {
            message: Message,
        }
        #[derive(Deserialize)]
        struct Completion {
            choices: Vec<Choice>,
            usage: Option<TokenUsage>,
        }
        let parsed: Completion =
            serde_json::from_slice(body).map_err(|e| ProviderError::Protocol(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Protocol("no message content in first choice".into()))?;
        Ok(ProviderReply {
            text,
            usage: parsed.usage,
        })
    }
}

#[async_trait]
impl ChatProvider for OpenAiProvider {
    async fn send(&self, config: &ModelConfig, request: &ChatRequest) -> Result<ProviderReply, ProviderError> {
        if config.endpoint.is_empty() {
            return Err(ProviderError::Fatal(format!("{}: no endpoint configured", config.model)));
        }
        let mut req = self
            .http
            .post(&config.endpoint)
            .timeout(Duration::from_secs_f64(config.timeout_s.max(0.001)))
            .json(&Self::request_body(config, request));
        if let Ok(key) = std::env::var(&config.api_key_env) {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status();
        let body = resp.bytes().await.map_err(|e| ProviderError::Transient(e.to_string()))?;
        match status.as_u16() {
            200..=299 => Self::parse_reply(&body),
            429 => Err(ProviderError::RateLimited),
            408 | 500..=599 => Err(ProviderError::Transient(format!("HTTP {status}"))),
            _ => Err(ProviderError::Fatal(format!(
                "HTTP {status}: {}",
                String::from_utf8_lossy(&body).chars().take(300).collect::<String>()
            ))),
        }
    }
}
