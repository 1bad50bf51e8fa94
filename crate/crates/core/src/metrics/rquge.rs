use std::ops::Range;

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::endpoint::{EndpointConfig, EndpointError, JsonEndpoint};

/// Token budget of the answerability scorer.
pub const RQUGE_MAX_TOKENS: usize = 512;
/// Share of the window that precedes the timestamp in transcript contexts.
pub const ANCHOR_FRACTION: f64 = 0.75;

pub const SCORE_MIN: f64 = 1.0;
pub const SCORE_MAX: f64 = 5.0;

/// Splits text into token byte spans. Truncation cuts only at span edges.
pub trait Tokenizer: Send + Sync {
    fn spans(&self, text: &str) -> Vec<Range<usize>>;
}

/// Whitespace-delimited tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    out.push(s..i);
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push(s..text.len());
        }
        out
    }
}

/// Every non-overlapping match of a pattern is a token.
#[derive(Debug, Clone)]
pub struct RegexTokenizer(Regex);

impl RegexTokenizer {
    pub fn new(pattern: &str) -> Result<Self, regex::Error> {
        Ok(RegexTokenizer(Regex::new(pattern)?))
    }
}

impl Tokenizer for RegexTokenizer {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        self.0.find_iter(text).map(|m| m.range()).collect()
    }
}

/// Tokenizer as named in an endpoint config.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "pattern", rename_all = "lowercase")]
pub enum TokenizerSpec {
    #[default]
    Whitespace,
    /// Words and single punctuation marks, close to BERT-style pre-tokenization.
    Wordpunct,
    Regex(String),
}

impl TokenizerSpec {
    pub fn build(&self) -> Result<Box<dyn Tokenizer>, regex::Error> {
        Ok(match self {
            TokenizerSpec::Whitespace => Box::new(WhitespaceTokenizer),
            TokenizerSpec::Wordpunct => Box::new(RegexTokenizer::new(r"\w+|[^\w\s]")?),
            TokenizerSpec::Regex(p) => Box::new(RegexTokenizer::new(p)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationKind {
    /// Full transcript with the timestamp segment starting at this byte.
    Transcript { anchor_byte: usize },
    /// Selected or rewritten context: keep the beginning.
    Extracted,
}

/// Fits a context into `max_tokens`.
///
/// Transcript contexts keep a window in which the tokens before the
/// timestamp segment fill 75% of the budget; the window is shifted when it
/// would run past either end. Other contexts lose their tail.
pub fn truncate_for_rquge(text: &str, kind: TruncationKind, tokenizer: &dyn Tokenizer, max_tokens: usize) -> String {
    let spans = tokenizer.spans(text);
    if spans.len() <= max_tokens {
        return text.to_string();
    }
    if max_tokens == 0 {
        return String::new();
    }
    let start = match kind {
        TruncationKind::Extracted => 0,
        TruncationKind::Transcript { anchor_byte } => {
            let anchor = spans.partition_point(|s| s.start < anchor_byte).min(spans.len() - 1);
            let before = (max_tokens as f64 * ANCHOR_FRACTION).round() as usize;
            anchor.saturating_sub(before).min(spans.len() - max_tokens)
        }
    };
    let window = &spans[start..start + max_tokens];
    text[window[0].start..window[max_tokens - 1].end].to_string()
}

#[async_trait]
pub trait RqugeBackend: Send + Sync {
    async fn score(&self, context: &str, question: &str, answer: &str) -> Result<f64, EndpointError>;
}

/// `POST {"context", "question", "answer"}` → `{"score"}`.
pub struct HttpRquge {
    endpoint: JsonEndpoint,
}

impl HttpRquge {
    pub fn new(config: EndpointConfig) -> Self {
        HttpRquge {
            endpoint: JsonEndpoint::new(config),
        }
    }
}

#[derive(Serialize)]
struct RqugeRequest<'a> {
    context: &'a str,
    question: &'a str,
    answer: &'a str,
}

#[derive(Deserialize)]
struct RqugeReply {
    score: f64,
}

#[async_trait]
impl RqugeBackend for HttpRquge {
    async fn score(&self, context: &str, question: &str, answer: &str) -> Result<f64, EndpointError> {
        let reply: RqugeReply = self.endpoint.post(&RqugeRequest { context, question, answer }).await?;
        Ok(reply.score)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RqugeError {
    #[error("answer is empty")]
    MissingAnswer,
    #[error("score is not a number")]
    NotANumber,
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
}

/// Answerability score, clamped to [1, 5]. The context must already be
/// truncated.
pub async fn rquge_score(
    context: &str,
    question: &str,
    answer: &str,
    backend: &dyn RqugeBackend,
) -> Result<f64, RqugeError> {
    if answer.trim().is_empty() {
        return Err(RqugeError::MissingAnswer);
    }
    let raw = backend.score(context, question, answer).await?;
    if raw.is_nan() {
        return Err(RqugeError::NotANumber);
    }
    let clamped = raw.clamp(SCORE_MIN, SCORE_MAX);
    if clamped != raw {
        log::warn!("RQUGE score {raw} outside [{SCORE_MIN}, {SCORE_MAX}], clamped to {clamped}");
    }
    Ok(clamped)
}
