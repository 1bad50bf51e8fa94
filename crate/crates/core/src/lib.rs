//! Lecture-grounded multiple-choice question generation.
//!
//! The crate turns a lecture (timestamped transcript segments plus slide
//! keyframes) into a compact context for a given timestamp and answer span,
//! asks a chat model for quiz questions, and scores the candidates against a
//! reference question.
//!
//! * [`corpus`]: lectures, quiz items, on-disk layout and statistics.
//! * [`ingest`]: keyframe extraction, alignment, captioning, punctuation.
//! * [`llm`]: cached, retrying chat-completions client.
//! * [`context`]: context construction strategies and their validators.
//! * [`qgen`]: question generation prompt and MCQ parsing.
//! * [`metrics`]: ROUGE-L, BLEU, NLI, RQUGE, @k aggregation and reports.

pub mod context;
pub mod corpus;
pub mod endpoint;
pub mod ingest;
pub mod llm;
pub mod metrics;
pub mod qgen;
pub mod text;
pub mod util;
