//! Question generation from a constructed context.

mod parse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::prompts::{render, QUESTION_GENERATION};
use crate::context::{ContextBundle, ContextStrategy};
use crate::corpus::QuizItem;
use crate::llm::{ChatRequest, LlmClient, LlmError};

pub use parse::{parse_mcq_block, render_candidates, ParsedQuestions, QuestionCandidate, OPTION_LABELS};

/// Candidates kept per generation.
pub const MAX_CANDIDATES: usize = 5;
/// Extra generation attempts when nothing parses.
pub const GENERATION_RETRIES: u32 = 1;

#[derive(Debug, Error)]
pub enum QgenError {
    #[error("{item}: context is empty")]
    EmptyContext { item: String },
    #[error("{item} [{strategy}]: no parseable question after {attempts} attempts")]
    NoCandidates {
        item: String,
        strategy: String,
        attempts: u32,
    },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub item_id: String,
    pub strategy: ContextStrategy,
    pub candidates: Vec<QuestionCandidate>,
    /// Cache key of the exchange the candidates came from.
    pub exchange: String,
    /// Model output, kept for audit.
    pub raw: String,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

/// The generation prompt. Only the context payload and, for the All
/// setting, the timestamp line differ between strategies.
pub fn qg_prompt(bundle: &ContextBundle, answer: &str) -> String {
    let timestamp_line = bundle
        .timestamp_id()
        .map(|id| format!("Timestamp: {id}\n"))
        .unwrap_or_default();
    render(
        QUESTION_GENERATION,
        &[("context", &bundle.render()), ("answer", answer), ("timestamp_line", &timestamp_line)],
    )
}

pub async fn generate_questions(
    bundle: &ContextBundle,
    item: &QuizItem,
    client: &LlmClient,
) -> Result<QuestionSet, QgenError> {
    if bundle.render().trim().is_empty() {
        return Err(QgenError::EmptyContext { item: item.id.clone() });
    }
    let prompt = qg_prompt(bundle, &item.answer);
    let mut attempts = 0;
    for attempt in 0..=GENERATION_RETRIES {
        attempts += 1;
        let exchange = match client.complete(&ChatRequest::text(prompt.clone()).with_attempt(attempt)).await {
            Ok(ex) => ex,
            Err(LlmError::Protocol { message, .. }) => {
                log::warn!("{}: generation attempt {attempt}: {message}", item.id);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mut parsed = parse_mcq_block(&exchange.response);
        if parsed.candidates.is_empty() {
            log::debug!("{}: generation attempt {attempt} produced no candidate", item.id);
            continue;
        }
        parsed.candidates.truncate(MAX_CANDIDATES);
        return Ok(QuestionSet {
            item_id: item.id.clone(),
            strategy: bundle.strategy,
            candidates: parsed.candidates,
            exchange: exchange.cache_key,
            raw: exchange.response,
            attempts,
            diagnostics: parsed.diagnostics,
        });
    }
    Err(QgenError::NoCandidates {
        item: item.id.clone(),
        strategy: bundle.strategy.key(),
        attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::testing::{client, lecture, quiz_item};
    use crate::context::{build_all_context, build_rule_context, Modality};
    use crate::llm::{ProviderReply, ScriptedProvider};

    fn blocks(n: usize) -> String {
        (1..=n)
            .map(|i| format!("Q{i}. Question {i}?\nA) a\nB) b\nC) c\nD) d\n"))
            .collect()
    }

    #[tokio::test]
    async fn five_blocks_five_candidates() {
        let lec = lecture(5);
        let item = quiz_item(&lec, 2, "two");
        let b = build_rule_context(&lec, &item, 3, Modality::Transcript).unwrap();
        let set = generate_questions(&b, &item, &client(ScriptedProvider::fixed(blocks(5)))).await.unwrap();
        assert_eq!(set.candidates.len(), 5);
        assert_eq!(set.candidates[4].stem, "Question 5?");
    }

    #[tokio::test]
    async fn seven_blocks_capped() {
        let lec = lecture(5);
        let item = quiz_item(&lec, 2, "two");
        let b = build_rule_context(&lec, &item, 3, Modality::Transcript).unwrap();
        let set = generate_questions(&b, &item, &client(ScriptedProvider::fixed(blocks(7)))).await.unwrap();
        assert_eq!(set.candidates.len(), 5);
        assert_eq!(set.candidates[0].stem, "Question 1?");
    }

    #[tokio::test]
    async fn retries_once_then_fails() {
        let lec = lecture(5);
        let item = quiz_item(&lec, 2, "two");
        let b = build_rule_context(&lec, &item, 3, Modality::Transcript).unwrap();
        let c = client(ScriptedProvider::fixed("I cannot do that."));
        let err = generate_questions(&b, &item, &c).await.unwrap_err();
        assert!(matches!(err, QgenError::NoCandidates { attempts: 2, .. }));
        assert_eq!(c.network_calls(), 2);

        let c = client(ScriptedProvider::new(|r| {
            Ok(ProviderReply::text(if r.attempt == 0 { "nope".into() } else { blocks(1) }))
        }));
        let set = generate_questions(&b, &item, &c).await.unwrap();
        assert_eq!(set.attempts, 2);
    }

    #[test]
    fn prompt_differs_only_in_payload() {
        let lec = lecture(5);
        let item = quiz_item(&lec, 2, "two");
        let all = build_all_context(&lec, &item, Modality::Transcript).unwrap();
        let rule = build_rule_context(&lec, &item, 3, Modality::Transcript).unwrap();
        let p_all = qg_prompt(&all, "two");
        let p_rule = qg_prompt(&rule, "two");
        assert!(p_all.contains("Correct Answer: two\nTimestamp: 2\n\nPlease provide"));
        assert!(p_rule.contains("Correct Answer: two\n\nPlease provide"));
        assert!(!p_rule.contains("Timestamp"));
        let strip = |p: &str, ctx: &str| p.replace(ctx, "<CTX>").replace("Timestamp: 2\n", "");
        assert_eq!(strip(&p_all, &all.render()), strip(&p_rule, &rule.render()));
    }

    #[tokio::test]
    async fn deterministic_stub_gives_deterministic_set() {
        let lec = lecture(5);
        let item = quiz_item(&lec, 2, "two");
        let b = build_rule_context(&lec, &item, 3, Modality::Transcript).unwrap();
        let a = generate_questions(&b, &item, &client(ScriptedProvider::fixed(blocks(3)))).await.unwrap();
        let b2 = generate_questions(&b, &item, &client(ScriptedProvider::fixed(blocks(3)))).await.unwrap();
        assert_eq!(a, b2);
    }
}
