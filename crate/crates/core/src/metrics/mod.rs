//! Scoring of generated questions and of the metrics themselves.

pub mod benchmark;
mod nli;
mod overlap;
mod report;
mod rquge;
mod score;

use thiserror::Error;

pub use benchmark::{
    benchmark_markdown, group_by_source, load_pairs, paraphrase_benchmark, sweep_threshold, BenchmarkError,
    BenchmarkPair, BenchmarkReport, BleuScorer, Confusion, NliScorer, PairScorer, RougeLScorer, SimilarityScorer,
    ThresholdResult, DEFAULT_THRESHOLD,
};
pub use nli::{nli_score, HttpNli, NliBackend, NliMode, NliProbs};
pub use overlap::{bleu, bleu_n, lcs_len, rouge_l, rouge_l_f1};
pub use report::{aggregate_report, MetricCell, ModelCells, Report, ReportRow};
pub use rquge::{
    rquge_score, truncate_for_rquge, HttpRquge, RegexTokenizer, RqugeBackend, RqugeError, Tokenizer, TokenizerSpec,
    TruncationKind, WhitespaceTokenizer, ANCHOR_FRACTION, RQUGE_MAX_TOKENS,
};
pub use score::{rquge_context, score_question_set, CandidateScores, ItemScores, Scoring};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AtKError {
    #[error("no candidate scores")]
    Empty,
    #[error("score is NaN")]
    NaN,
}

/// Best score among the candidates.
pub fn score_at_k(scores: &[f64]) -> Result<f64, AtKError> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(AtKError::NaN);
    }
    scores.iter().copied().reduce(f64::max).ok_or(AtKError::Empty)
}
