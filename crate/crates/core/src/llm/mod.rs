//! Provider-agnostic chat completions with a content-addressed response cache.
//!
//! [`LlmClient::complete`] consults the cache first; on a miss it sends the
//! request through a [`ChatProvider`], retrying rate limits and transient
//! failures with exponential backoff, and persists the exchange before
//! returning it. With a deterministic provider every run is reproducible, and
//! with a warm cache no network traffic happens at all.

mod cache;
mod client;
mod config;
mod openai;
mod provider;

pub use cache::{cache_key, ResponseCache};
pub use client::{ChatExchange, LlmClient, LlmError};
pub use config::ModelConfig;
pub use openai::OpenAiProvider;
pub use provider::{ChatProvider, ChatRequest, ImageInput, ProviderError, ProviderReply, ScriptedProvider, TokenUsage};
