use crate::corpus::QuizItem;
use crate::llm::{ChatRequest, LlmClient};

use super::bundle::{Check, ContextBundle, KnowledgeStatement};
use super::parse::parse_rewrite;
use super::prompts::{render, REWRITE};
use super::select::retryable;
use super::validate::validate_explicitness;
use super::{ContextError, ContextSettings};

/// Most statements kept from one rewrite.
pub const MAX_STATEMENTS: usize = 5;

pub fn rewrite_prompt(context: &str, answer: &str) -> String {
    render(REWRITE, &[("context", context), ("answer", answer)])
}

/// Rewrites the selected context into answer-bearing statements.
///
/// Statements that do not contain the answer are dropped. If none survive,
/// the rewrite is retried; after that the bundle keeps its selection and
/// `validation.explicitness` is `Fail`. Only transport-level errors are
/// returned as `Err`.
pub async fn rewrite_context(
    mut bundle: ContextBundle,
    item: &QuizItem,
    client: &LlmClient,
    settings: &ContextSettings,
) -> Result<ContextBundle, ContextError> {
    if !bundle.has_selection() {
        return Err(ContextError::Precondition {
            lecture: item.lecture_id.clone(),
            message: "nothing selected to rewrite".into(),
        });
    }
    bundle.strategy.rewrite = true;
    let prompt = rewrite_prompt(&bundle.render_selection(), &item.answer);

    for attempt in 0..=settings.rewrite_retries {
        bundle.validation.rewrite_attempts += 1;
        let exchange = match client.complete(&ChatRequest::text(prompt.clone()).with_attempt(attempt)).await {
            Ok(ex) => ex,
            Err(e) if retryable(&e) => {
                log::warn!("{}: rewrite attempt {attempt}: {e}", item.id);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        bundle.exchanges.push(exchange.cache_key.clone());
        let parsed = match parse_rewrite(&exchange.response, MAX_STATEMENTS) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("{}: rewrite attempt {attempt}: {e}", item.id);
                continue;
            }
        };
        let (kept, dropped): (Vec<_>, Vec<_>) =
            parsed.into_iter().partition(|s| validate_explicitness(&s.text, &item.answer));
        bundle.validation.dropped_statements += dropped.len();
        if !kept.is_empty() {
            bundle.statements = kept
                .into_iter()
                .map(|s| KnowledgeStatement {
                    text: s.text,
                    contains_answer: true,
                    granularity: s.granularity,
                })
                .collect();
            bundle.validation.explicitness = Check::Pass;
            return Ok(bundle);
        }
    }
    log::warn!("{}: rewrite produced no answer-bearing statement, keeping the selection", item.id);
    bundle.validation.explicitness = Check::Fail;
    Ok(bundle)
}
