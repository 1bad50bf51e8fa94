use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError};
use crate::text::word_count;

/// Mean / population std / min / median / max of one field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    /// `None` for an empty list.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        } else {
            sorted[mid]
        };
        Some(Summary {
            count: values.len(),
            mean,
            std: var.sqrt(),
            min: sorted[0],
            median,
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub lectures: usize,
    pub items: usize,
    pub transcript_words: Option<Summary>,
    pub segments: Option<Summary>,
    pub keyframes: Option<Summary>,
    pub choices: Option<Summary>,
    pub question_words: Option<Summary>,
    pub answer_words: Option<Summary>,
    pub distractor_words: Option<Summary>,
}

impl CorpusStats {
    /// Table rows in display order: (group, field, summary).
    pub fn rows(&self) -> Vec<(&'static str, &'static str, Option<Summary>)> {
        vec![
            ("Transcript", "# words", self.transcript_words),
            ("", "# seg.", self.segments),
            ("Keyframe", "# frames", self.keyframes),
            ("MCQ", "# choices", self.choices),
            ("Question", "# words", self.question_words),
            ("Answer", "# words", self.answer_words),
            ("Distractor", "# words", self.distractor_words),
        ]
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| | | Mean | ±STD | Min | Med. | Max |\n|---|---|---:|---:|---:|---:|---:|\n");
        for (group, field, s) in self.rows() {
            match s {
                Some(s) => out.push_str(&format!(
                    "| {group} | {field} | {:.1} | {:.1} | {} | {:.1} | {} |\n",
                    s.mean, s.std, s.min, s.median, s.max
                )),
                None => out.push_str(&format!("| {group} | {field} | - | - | - | - | - |\n")),
            }
        }
        out
    }
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats, CorpusError> {
    if corpus.entries.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut transcript_words = Vec::new();
    let mut segments = Vec::new();
    let mut keyframes = Vec::new();
    let mut choices = Vec::new();
    let mut question_words = Vec::new();
    let mut answer_words = Vec::new();
    let mut distractor_words = Vec::new();

    for entry in &corpus.entries {
        let lec = &entry.lecture;
        transcript_words.push(lec.segments.iter().map(|s| word_count(&s.text)).sum::<usize>() as f64);
        segments.push(lec.segments.len() as f64);
        keyframes.push(lec.keyframes.len() as f64);
        for item in &entry.items {
            choices.push(item.choice_count as f64);
            question_words.push(word_count(&item.reference_question) as f64);
            answer_words.push(word_count(&item.answer) as f64);
            distractor_words.extend(item.distractors.iter().map(|d| word_count(d) as f64));
        }
    }

    Ok(CorpusStats {
        lectures: corpus.entries.len(),
        items: choices.len(),
        transcript_words: Summary::of(&transcript_words),
        segments: Summary::of(&segments),
        keyframes: Summary::of(&keyframes),
        choices: Summary::of(&choices),
        question_words: Summary::of(&question_words),
        answer_words: Summary::of(&answer_words),
        distractor_words: Summary::of(&distractor_words),
    })
}
