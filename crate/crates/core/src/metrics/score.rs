use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::nli::{nli_score, NliBackend, NliMode};
use super::overlap::rouge_l;
use super::rquge::{rquge_score, truncate_for_rquge, RqugeBackend, Tokenizer, TruncationKind, RQUGE_MAX_TOKENS};
use super::score_at_k;
use crate::context::{ContextBundle, ContextStrategy};
use crate::corpus::QuizItem;
use crate::qgen::QuestionSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScores {
    pub ordinal: usize,
    pub stem: String,
    pub nli: Option<f64>,
    pub rouge_l: f64,
    pub rquge: Option<f64>,
}

/// Scores of one (item, strategy, model). `@5` values are the best
/// candidate's; a metric that could not be computed for every candidate is
/// `None` for the item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub item_id: String,
    pub lecture_id: String,
    pub model: String,
    pub strategy: ContextStrategy,
    #[serde(default)]
    pub candidates: Vec<CandidateScores>,
    pub nli_at5: Option<f64>,
    pub rouge_l_at5: Option<f64>,
    pub rquge_at5: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Set when context construction or generation failed for this item.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
}

impl ItemScores {
    pub fn failed(item: &QuizItem, model: &str, strategy: ContextStrategy, reason: impl Into<String>) -> Self {
        ItemScores {
            item_id: item.id.clone(),
            lecture_id: item.lecture_id.clone(),
            model: model.to_string(),
            strategy,
            candidates: Vec::new(),
            nli_at5: None,
            rouge_l_at5: None,
            rquge_at5: None,
            notes: Vec::new(),
            failed: Some(reason.into()),
        }
    }
}

/// Scoring backends. Either endpoint may be absent; its metric is then
/// reported as unscored.
#[derive(Clone)]
pub struct Scoring {
    pub nli: Option<Arc<dyn NliBackend>>,
    pub nli_mode: NliMode,
    pub rquge: Option<Arc<dyn RqugeBackend>>,
    pub tokenizer: Arc<dyn Tokenizer>,
    pub rquge_max_tokens: usize,
}

impl Default for Scoring {
    fn default() -> Self {
        Scoring {
            nli: None,
            nli_mode: NliMode::Symmetric,
            rquge: None,
            tokenizer: Arc::new(super::rquge::WhitespaceTokenizer),
            rquge_max_tokens: RQUGE_MAX_TOKENS,
        }
    }
}

/// The context RQUGE sees: listings keep a window around the timestamp,
/// everything else is cut from the end.
pub fn rquge_context(bundle: &ContextBundle, scoring: &Scoring) -> String {
    let kind = match bundle.anchor_offset() {
        Some(anchor_byte) => TruncationKind::Transcript { anchor_byte },
        None => TruncationKind::Extracted,
    };
    truncate_for_rquge(&bundle.render(), kind, scoring.tokenizer.as_ref(), scoring.rquge_max_tokens)
}

pub async fn score_question_set(
    set: &QuestionSet,
    item: &QuizItem,
    bundle: &ContextBundle,
    model: &str,
    scoring: &Scoring,
) -> ItemScores {
    let mut notes = Vec::new();
    let reference = item.reference_question.trim();
    let nli_backend = match (&scoring.nli, reference.is_empty()) {
        (_, true) => {
            notes.push("nli: no reference question".to_string());
            None
        }
        (None, _) => {
            notes.push("nli: endpoint not configured".to_string());
            None
        }
        (Some(b), false) => Some(b.as_ref()),
    };
    if scoring.rquge.is_none() {
        notes.push("rquge: endpoint not configured".to_string());
    }
    let context = scoring.rquge.as_ref().map(|_| rquge_context(bundle, scoring));

    let mut candidates = Vec::with_capacity(set.candidates.len());
    for c in &set.candidates {
        let nli = match nli_backend {
            Some(b) => match nli_score(&c.stem, reference, b, scoring.nli_mode).await {
                Ok(s) => Some(s),
                Err(e) => {
                    notes.push(format!("nli: candidate {}: {e}", c.ordinal));
                    None
                }
            },
            None => None,
        };
        let rquge = match (&scoring.rquge, &context) {
            (Some(b), Some(ctx)) => match rquge_score(ctx, &c.stem, &item.answer, b.as_ref()).await {
                Ok(s) => Some(s),
                Err(e) => {
                    notes.push(format!("rquge: candidate {}: {e}", c.ordinal));
                    None
                }
            },
            _ => None,
        };
        candidates.push(CandidateScores {
            ordinal: c.ordinal,
            stem: c.stem.clone(),
            nli,
            rouge_l: if reference.is_empty() { 0.0 } else { rouge_l(&c.stem, reference) },
            rquge,
        });
    }

    let all = |f: fn(&CandidateScores) -> Option<f64>| -> Option<f64> {
        let xs: Option<Vec<f64>> = candidates.iter().map(f).collect();
        xs.and_then(|xs| score_at_k(&xs).ok())
    };
    ItemScores {
        item_id: item.id.clone(),
        lecture_id: item.lecture_id.clone(),
        model: model.to_string(),
        strategy: set.strategy,
        nli_at5: all(|c| c.nli),
        rouge_l_at5: if reference.is_empty() { None } else { all(|c| Some(c.rouge_l)) },
        rquge_at5: all(|c| c.rquge),
        candidates,
        notes,
        failed: None,
    }
}
