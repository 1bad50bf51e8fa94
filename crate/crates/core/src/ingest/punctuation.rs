use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::corpus::TranscriptSegment;
use crate::endpoint::{EndpointConfig, EndpointError, JsonEndpoint};

#[async_trait]
pub trait PunctuationRestorer: Send + Sync {
    async fn restore(&self, text: &str) -> Result<String, EndpointError>;
}

/// `POST {"text": ...}` → `{"text": ...}`.
pub struct HttpPunctuation {
    endpoint: JsonEndpoint,
}

impl HttpPunctuation {
    pub fn new(config: EndpointConfig) -> Self {
        HttpPunctuation {
            endpoint: JsonEndpoint::new(config),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TextBody {
    text: String,
}

#[async_trait]
impl PunctuationRestorer for HttpPunctuation {
    async fn restore(&self, text: &str) -> Result<String, EndpointError> {
        let reply: TextBody = self.endpoint.post(&TextBody { text: text.to_string() }).await?;
        Ok(reply.text)
    }
}

fn bare_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Restores punctuation segment by segment. Segment boundaries never move.
/// A segment keeps its original text when the endpoint fails or when the
/// restored text changes more than punctuation and casing.
pub async fn restore_punctuation(
    segments: Vec<TranscriptSegment>,
    restorer: &dyn PunctuationRestorer,
    skip: bool,
) -> Vec<TranscriptSegment> {
    if skip {
        return segments;
    }
    let mut out = Vec::with_capacity(segments.len());
    for mut seg in segments {
        match restorer.restore(&seg.text).await {
            Ok(restored) if bare_words(&restored) == bare_words(&seg.text) => seg.text = restored,
            Ok(_) => log::warn!("segment {}: restoration altered words, keeping original", seg.index),
            Err(e) => log::warn!("segment {}: punctuation restoration failed: {e}", seg.index),
        }
        out.push(seg);
    }
    out
}
