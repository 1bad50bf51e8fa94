use crate::corpus::{Lecture, QuizItem};
use crate::llm::{ChatRequest, LlmClient, LlmError};
use crate::text::collapse_whitespace;

use super::bundle::{Check, ContextBundle, ContextUnit};
use super::parse::parse_selection;
use super::prompts::{render, COT_KEYFRAMES, COT_TRANSCRIPT, DIRECT_KEYFRAMES, DIRECT_TRANSCRIPT};
use super::strategy::{ContextStrategy, Modality, Selection};
use super::validate::integrity_against_normalized;
use super::{ContextError, ContextSettings};

/// The units of one modality plus the anchor ID of the item within them.
pub(crate) struct ModalityView {
    pub units: Vec<ContextUnit>,
    pub anchor_id: usize,
}

impl ModalityView {
    pub fn of(lecture: &Lecture, item: &QuizItem, modality: Modality) -> Result<Self, ContextError> {
        let precondition = |message: String| ContextError::Precondition {
            lecture: lecture.id.clone(),
            message,
        };
        match modality {
            Modality::Transcript => {
                if lecture.segments.is_empty() {
                    return Err(precondition("transcript is empty".into()));
                }
                let units = lecture
                    .segments
                    .iter()
                    .map(|s| ContextUnit {
                        id: s.index,
                        text: collapse_whitespace(&s.text),
                    })
                    .collect();
                Ok(ModalityView {
                    units,
                    anchor_id: item.segment_index,
                })
            }
            Modality::Keyframes => {
                if lecture.keyframes.is_empty() {
                    return Err(precondition("lecture has no keyframes".into()));
                }
                let missing: Vec<usize> = lecture
                    .keyframes
                    .iter()
                    .filter(|k| k.caption.trim().is_empty())
                    .map(|k| k.index)
                    .collect();
                if !missing.is_empty() {
                    return Err(precondition(format!("keyframes without captions: {missing:?}")));
                }
                let units = lecture
                    .keyframes
                    .iter()
                    .map(|k| ContextUnit {
                        id: k.index,
                        text: collapse_whitespace(&k.caption),
                    })
                    .collect();
                let anchor_id = lecture.keyframe_for_segment(item.segment_index).unwrap_or(1);
                Ok(ModalityView { units, anchor_id })
            }
            Modality::Both => Err(ContextError::Strategy("a single modality is required here".into())),
        }
    }

    pub fn listing(&self) -> String {
        self.units
            .iter()
            .map(|u| format!("{}. {}", u.id, u.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Unit texts joined by single spaces (already whitespace-collapsed).
    pub fn reference(&self) -> String {
        self.units.iter().map(|u| u.text.as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn window(&self, k: usize) -> &[ContextUnit] {
        let pos = self.units.iter().position(|u| u.id == self.anchor_id).unwrap_or(0);
        let (lo, hi) = rule_window(pos + 1, k, self.units.len());
        &self.units[lo - 1..hi]
    }
}

/// Inclusive 1-based window of `min(k, n)` units around `anchor`. The window
/// is centered (extra unit after the anchor for even `k`) and shifted, never
/// shrunk, at either end.
pub fn rule_window(anchor: usize, k: usize, n: usize) -> (usize, usize) {
    assert!(n >= 1 && k >= 1 && (1..=n).contains(&anchor));
    let len = k.min(n);
    let start = anchor.saturating_sub((len - 1) / 2).max(1).min(n - len + 1);
    (start, start + len - 1)
}

/// Every unit of the modality, in order, with its ID.
pub fn build_all_context(lecture: &Lecture, item: &QuizItem, modality: Modality) -> Result<ContextBundle, ContextError> {
    let view = ModalityView::of(lecture, item, modality)?;
    let strategy = ContextStrategy::new(Selection::All, false, modality).map_err(ContextError::Strategy)?;
    let mut bundle = ContextBundle::new(strategy, view.anchor_id);
    bundle.listing = view.units;
    Ok(bundle)
}

/// A fixed window of `k` consecutive units around the item's timestamp.
pub fn build_rule_context(
    lecture: &Lecture,
    item: &QuizItem,
    k: usize,
    modality: Modality,
) -> Result<ContextBundle, ContextError> {
    if k == 0 {
        return Err(ContextError::Strategy("rule window must be at least 1".into()));
    }
    let view = ModalityView::of(lecture, item, modality)?;
    let strategy = ContextStrategy::new(Selection::Rule(k), false, modality).map_err(ContextError::Strategy)?;
    let mut bundle = ContextBundle::new(strategy, view.anchor_id);
    bundle.listing = view.window(k).to_vec();
    Ok(bundle)
}

pub async fn select_direct(
    lecture: &Lecture,
    item: &QuizItem,
    modality: Modality,
    client: &LlmClient,
    settings: &ContextSettings,
) -> Result<ContextBundle, ContextError> {
    select_with_model(lecture, item, modality, client, settings, false).await
}

pub async fn select_cot(
    lecture: &Lecture,
    item: &QuizItem,
    modality: Modality,
    client: &LlmClient,
    settings: &ContextSettings,
) -> Result<ContextBundle, ContextError> {
    select_with_model(lecture, item, modality, client, settings, true).await
}

pub(crate) fn selection_prompt(view: &ModalityView, answer: &str, modality: Modality, cot: bool) -> String {
    let id = view.anchor_id.to_string();
    let listing = view.listing();
    let (template, id_name) = match (modality, cot) {
        (Modality::Keyframes, false) => (DIRECT_KEYFRAMES, "keyframe_id"),
        (Modality::Keyframes, true) => (COT_KEYFRAMES, "keyframe_id"),
        (_, false) => (DIRECT_TRANSCRIPT, "context_id"),
        (_, true) => (COT_TRANSCRIPT, "context_id"),
    };
    render(template, &[("context", &listing), ("answer", answer), (id_name, &id)])
}

/// Errors that a fresh sample might fix are retried; transport and
/// configuration failures propagate.
pub(crate) fn retryable(e: &LlmError) -> bool {
    matches!(e, LlmError::Protocol { .. })
}

async fn select_with_model(
    lecture: &Lecture,
    item: &QuizItem,
    modality: Modality,
    client: &LlmClient,
    settings: &ContextSettings,
    cot: bool,
) -> Result<ContextBundle, ContextError> {
    let view = ModalityView::of(lecture, item, modality)?;
    let selection = if cot { Selection::Cot } else { Selection::Direct };
    let strategy = ContextStrategy::new(selection, false, modality).map_err(ContextError::Strategy)?;
    let prompt = selection_prompt(&view, &item.answer, modality, cot);
    let reference = view.reference();

    let mut bundle = ContextBundle::new(strategy, view.anchor_id);
    for attempt in 0..=settings.selection_retries {
        bundle.validation.selection_attempts += 1;
        let exchange = match client.complete(&ChatRequest::text(prompt.clone()).with_attempt(attempt)).await {
            Ok(ex) => ex,
            Err(e) if retryable(&e) => {
                log::warn!("{} {}: selection attempt {attempt}: {e}", lecture.id, item.id);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        bundle.exchanges.push(exchange.cache_key.clone());
        let parsed = match parse_selection(&exchange.response) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("{} {}: selection attempt {attempt}: {e}", lecture.id, item.id);
                continue;
            }
        };
        bundle.reasoning = parsed.reasoning;
        let (kept, dropped): (Vec<String>, Vec<String>) = parsed
            .excerpts
            .into_iter()
            .map(|(_, text)| text)
            .partition(|e| integrity_against_normalized(e, &reference));
        bundle.validation.dropped_excerpts += dropped.len();
        if kept.is_empty() {
            log::debug!("{} {}: selection attempt {attempt}: no excerpt passed integrity", lecture.id, item.id);
            continue;
        }
        bundle.contextual_summary = parsed.summary;
        match modality {
            Modality::Keyframes => bundle.selected_keyframe_text = kept,
            _ => bundle.selected_transcript = kept,
        }
        bundle.validation.integrity = Check::Pass;
        return Ok(bundle);
    }

    log::warn!(
        "{} {}: selection failed validation {} times, using a rule window of {}",
        lecture.id,
        item.id,
        bundle.validation.selection_attempts,
        settings.rule_best_k
    );
    let window: Vec<String> = view.window(settings.rule_best_k).iter().map(|u| u.text.clone()).collect();
    match modality {
        Modality::Keyframes => bundle.selected_keyframe_text = window,
        _ => bundle.selected_transcript = window,
    }
    bundle.contextual_summary.clear();
    bundle.validation.integrity = Check::Fallback;
    Ok(bundle)
}
