use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Chat-completions URL, e.g. `https://api.openai.com/v1/chat/completions`.
    /// Offline providers leave it empty.
    #[serde(default)]
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Base delay of the exponential backoff.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

fn default_max_tokens() -> u32 {
    2048
}
fn default_timeout_s() -> f64 {
    120.0
}
fn default_max_retries() -> u32 {
    4
}
fn default_in_flight() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    1000
}
fn default_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}

impl ModelConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        ModelConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout_s: default_timeout_s(),
            max_retries: default_max_retries(),
            max_in_flight: default_in_flight(),
            backoff_ms: default_backoff_ms(),
            api_key_env: default_key_env(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be >= 1".into());
        }
        if self.model.is_empty() {
            return Err("model name is empty".into());
        }
        Ok(())
    }
}
