//! Context construction: which part of a lecture the question generator sees.
//!
//! All and Rule-k need no model. Direct and CoT ask the model to pick
//! excerpts and validate them against the source text; CombineMM merges CoT
//! selections from the transcript and the slide captions. Any of them can be
//! followed by a rewrite into answer-bearing statements.

mod bundle;
mod parse;
pub mod prompts;
mod rewrite;
mod select;
mod strategy;
mod validate;

use thiserror::Error;

use crate::corpus::{Lecture, QuizItem};
use crate::llm::{LlmClient, LlmError};

pub use bundle::{Check, ContextBundle, ContextUnit, KnowledgeStatement, Validation};
pub use parse::{parse_rewrite, parse_selection, split_excerpts, ExcerptSource, ParseError, ParsedSelection, ParsedStatement};
pub use rewrite::{rewrite_context, rewrite_prompt, MAX_STATEMENTS};
pub use select::{build_all_context, build_rule_context, rule_window, select_cot, select_direct};
pub use strategy::{ContextStrategy, Modality, Selection, SWEEP_KS};
pub use validate::{normalized_answer, validate_explicitness, validate_integrity};

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("lecture {lecture}: {message}")]
    Precondition { lecture: String, message: String },
    #[error("invalid strategy: {0}")]
    Strategy(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextSettings {
    /// Extra selection attempts after the first fails validation.
    pub selection_retries: u32,
    /// Extra rewrite attempts after the first yields no valid statement.
    pub rewrite_retries: u32,
    /// Window used for Rule-Best and for selection fallback.
    pub rule_best_k: usize,
}

impl Default for ContextSettings {
    fn default() -> Self {
        ContextSettings {
            selection_retries: 2,
            rewrite_retries: 1,
            rule_best_k: 5,
        }
    }
}

/// Merges a transcript and a keyframe CoT selection into labeled sections.
/// If one side selected nothing, the other is used alone and
/// `validation.degraded` says so.
pub fn combine_multimodal(transcript: ContextBundle, keyframes: ContextBundle) -> Result<ContextBundle, ContextError> {
    let t_empty = transcript.selected_transcript.is_empty();
    let k_empty = keyframes.selected_keyframe_text.is_empty();
    if t_empty && k_empty {
        return Err(ContextError::Precondition {
            lecture: String::new(),
            message: "neither modality produced a selection".into(),
        });
    }
    let strategy = ContextStrategy::new(Selection::CombineMm, false, Modality::Both).map_err(ContextError::Strategy)?;
    let mut out = ContextBundle::new(strategy, transcript.anchor_id);
    out.selected_transcript = transcript.selected_transcript;
    out.selected_keyframe_text = keyframes.selected_keyframe_text;
    out.contextual_summary = if transcript.contextual_summary.is_empty() {
        keyframes.contextual_summary
    } else {
        transcript.contextual_summary
    };
    out.reasoning = [("transcript", &transcript.reasoning), ("keyframes", &keyframes.reasoning)]
        .iter()
        .filter(|(_, r)| !r.is_empty())
        .map(|(label, r)| format!("[{label}] {r}"))
        .collect::<Vec<_>>()
        .join("\n\n");
    out.exchanges = transcript.exchanges.into_iter().chain(keyframes.exchanges).collect();

    let (tv, kv) = (&transcript.validation, &keyframes.validation);
    out.validation.selection_attempts = tv.selection_attempts + kv.selection_attempts;
    out.validation.dropped_excerpts = tv.dropped_excerpts + kv.dropped_excerpts;
    let contributing: Vec<Check> = [(t_empty, tv.integrity), (k_empty, kv.integrity)]
        .iter()
        .filter(|(empty, _)| !empty)
        .map(|(_, c)| *c)
        .collect();
    out.validation.integrity = if contributing.contains(&Check::Fallback) {
        Check::Fallback
    } else {
        Check::Pass
    };
    if t_empty {
        out.validation.degraded = Some("no transcript selection; keyframes only".into());
    } else if k_empty {
        out.validation.degraded = Some("no keyframe selection; transcript only".into());
    }
    Ok(out)
}

/// Builds the context for one item under one strategy.
pub async fn build_context(
    lecture: &Lecture,
    item: &QuizItem,
    strategy: ContextStrategy,
    client: &LlmClient,
    settings: &ContextSettings,
) -> Result<ContextBundle, ContextError> {
    let m = strategy.modality;
    let mut bundle = match strategy.selection {
        Selection::All => build_all_context(lecture, item, m)?,
        Selection::Rule(k) => build_rule_context(lecture, item, k, m)?,
        Selection::RuleBest => {
            let mut b = build_rule_context(lecture, item, settings.rule_best_k, m)?;
            b.strategy.selection = Selection::RuleBest;
            b
        }
        Selection::Direct => select_direct(lecture, item, m, client, settings).await?,
        Selection::Cot => select_cot(lecture, item, m, client, settings).await?,
        Selection::CombineMm => {
            let t = select_cot(lecture, item, Modality::Transcript, client, settings).await?;
            let k = match select_cot(lecture, item, Modality::Keyframes, client, settings).await {
                Ok(k) => k,
                Err(ContextError::Precondition { message, .. }) => {
                    log::warn!("{} {}: keyframe side unavailable: {message}", lecture.id, item.id);
                    let mut empty = t.clone();
                    empty.selected_transcript.clear();
                    empty.reasoning.clear();
                    empty.exchanges.clear();
                    empty.validation = Validation::default();
                    empty
                }
                Err(e) => return Err(e),
            };
            combine_multimodal(t, k)?
        }
    };
    if strategy.rewrite {
        bundle = rewrite_context(bundle, item, client, settings).await?;
    }
    Ok(bundle)
}

#[cfg(test)]
pub(crate) mod testing {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use crate::corpus::{Keyframe, Lecture, QuizItem, TimestampAnchor, TranscriptSegment};
    use crate::ingest::align_keyframes;
    use crate::llm::{LlmClient, ModelConfig, ScriptedProvider};

    const WORDS: [&str; 12] = [
        "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    ];

    /// `n` ten-second segments "segment <word> text." and one captioned
    /// keyframe per two segments.
    pub fn lecture(n: usize) -> Lecture {
        let segments = (0..n)
            .map(|i| TranscriptSegment {
                index: i + 1,
                start_s: i as f64 * 10.0,
                end_s: i as f64 * 10.0 + 9.0,
                text: format!("segment {} text.", WORDS.get(i).map(|w| w.to_string()).unwrap_or(format!("n{}", i + 1))),
            })
            .collect();
        let keyframes = (0..n.div_ceil(2))
            .map(|i| Keyframe {
                index: i + 1,
                timestamp_s: i as f64 * 20.0,
                image_ref: format!("frames/{}.png", i * 20),
                phash: vec![0; 64],
                caption: format!("Slide {} lists key point {}.", i + 1, i + 1),
                caption_error: None,
            })
            .collect();
        let mut lec = Lecture {
            id: "lec".into(),
            course: "course".into(),
            duration_s: n as f64 * 10.0,
            segments,
            keyframes,
            alignment: BTreeMap::new(),
            dir: Default::default(),
        };
        lec.alignment = align_keyframes(&lec);
        lec
    }

    pub fn quiz_item(lecture: &Lecture, segment: usize, answer: &str) -> QuizItem {
        QuizItem {
            id: format!("q{segment}"),
            lecture_id: lecture.id.clone(),
            timestamp_s: lecture.segment(segment).unwrap().start_s + 1.0,
            segment_index: segment,
            answer: answer.into(),
            reference_question: "What is it?".into(),
            distractors: vec![],
            choice_count: 4,
            anchor: TimestampAnchor::Seconds,
        }
    }

    pub fn client(provider: ScriptedProvider) -> LlmClient {
        let mut cfg = ModelConfig::new("http://unused", "stub");
        cfg.backoff_ms = 1;
        cfg.max_retries = 1;
        LlmClient::new(cfg, Arc::new(provider), None).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use crate::llm::{ProviderReply, ScriptedProvider};

    fn stub_for_combined(caption: String) -> ScriptedProvider {
        ScriptedProvider::new(move |r| {
            let text = if r.prompt.contains("Slide Description:") {
                format!("Reasoning: slide.\nExtracted Context: From Slides: \"{caption}\"")
            } else if r.prompt.contains("Rewritten Contexts") {
                "Rewritten Contexts:\n1. Point three matters.\n2. Nothing here.".to_string()
            } else {
                "Reasoning: seg.\nExtracted Context:\nContextual summary: Intro.\n\
                 From Transcript Excerpt: \"segment three text.\""
                    .to_string()
            };
            Ok(ProviderReply::text(text))
        })
    }

    #[tokio::test]
    async fn combined_bundle_has_both_sections() {
        let lec = lecture(6);
        let item = quiz_item(&lec, 3, "three");
        let caption = lec.keyframes[1].caption.clone();
        let c = client(stub_for_combined(caption));
        let s: ContextStrategy = "combinemm".parse().unwrap();
        let b = build_context(&lec, &item, s, &c, &ContextSettings::default()).await.unwrap();
        let text = b.render();
        assert!(text.contains("Contextual summary: Intro."));
        assert!(text.contains("From Transcript Excerpt: \"segment three text.\""));
        assert!(text.contains("From Keyframe Excerpt: \"Slide 2 lists key point 2.\""));
        assert_eq!(b.validation.integrity, Check::Pass);
        assert!(b.validation.degraded.is_none());
        assert_eq!(b.exchanges.len(), 2);
    }

    #[tokio::test]
    async fn combined_rewrite_keeps_explicitness() {
        let lec = lecture(6);
        let item = quiz_item(&lec, 3, "three");
        let c = client(stub_for_combined(lec.keyframes[1].caption.clone()));
        let s: ContextStrategy = "combinemm+rewrite".parse().unwrap();
        let b = build_context(&lec, &item, s, &c, &ContextSettings::default()).await.unwrap();
        assert_eq!(b.statements.len(), 1);
        assert!(b.statements.iter().all(|s| validate_explicitness(&s.text, &item.answer)));
        assert_eq!(b.strategy.label(), "CombineMM+Rewrite");
    }

    #[tokio::test]
    async fn missing_captions_degrade_to_transcript() {
        let mut lec = lecture(6);
        for k in &mut lec.keyframes {
            k.caption.clear();
        }
        let item = quiz_item(&lec, 3, "three");
        let c = client(stub_for_combined(String::new()));
        let s: ContextStrategy = "combinemm".parse().unwrap();
        let b = build_context(&lec, &item, s, &c, &ContextSettings::default()).await.unwrap();
        assert!(b.selected_keyframe_text.is_empty());
        assert!(b.validation.degraded.is_some());
        assert!(!b.render().contains("Keyframe"));
    }

    #[test]
    fn combine_requires_something() {
        let lec = lecture(2);
        let item = quiz_item(&lec, 1, "one");
        let mut a = build_all_context(&lec, &item, Modality::Transcript).unwrap();
        a.listing.clear();
        assert!(combine_multimodal(a.clone(), a).is_err());
    }

    #[tokio::test]
    async fn rule_best_uses_setting() {
        let lec = lecture(10);
        let item = quiz_item(&lec, 5, "five");
        let c = client(ScriptedProvider::fixed("unused"));
        let s: ContextStrategy = "rule-best".parse().unwrap();
        let settings = ContextSettings {
            rule_best_k: 3,
            ..Default::default()
        };
        let b = build_context(&lec, &item, s, &c, &settings).await.unwrap();
        assert_eq!(b.listing.len(), 3);
        assert_eq!(b.strategy.label(), "Rule-Best");
        assert_eq!(c.network_calls(), 0);
    }
}
