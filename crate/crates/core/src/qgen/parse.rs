//! Tolerant parser for numbered multiple-choice blocks.
//!
//! Accepted variants, and only these:
//! - question markers `Q1.`, `Q1:`, `Q1)` at line start, optionally wrapped in
//!   markdown emphasis or preceded by a quote character
//! - option labels `A)`, `A.`, `A:`, `(A)` either one per line or inline
//! - CRLF line endings and arbitrary leading whitespace
//! - an optional `Answer: X` line after the options

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::text::collapse_whitespace;

pub const OPTION_LABELS: [char; 4] = ['A', 'B', 'C', 'D'];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionCandidate {
    /// 1-based position among the parsed candidates.
    pub ordinal: usize,
    pub stem: String,
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_letter: Option<char>,
    /// False when the stem does not end with a question mark (kept anyway).
    pub interrogative: bool,
    /// The block as the model wrote it.
    pub raw: String,
}

impl QuestionCandidate {
    /// Everything except `raw`, for comparing parses of different renderings.
    pub fn content(&self) -> (usize, &str, &[String], Option<char>, bool) {
        (self.ordinal, &self.stem, &self.options, self.answer_letter, self.interrogative)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedQuestions {
    pub candidates: Vec<QuestionCandidate>,
    /// One line per dropped block.
    pub diagnostics: Vec<String>,
}

static QUESTION_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?m)^[ \t"'“*_#>]*[*_]*Q(\d+)[*_]*[.:)][*_]*[ \t]*"#).unwrap());
static ANSWER_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[ \t*_]*(?:correct )?answer[*_]*\s*[:\-][*_]*\s*\(?([A-D])\b").unwrap());

fn label_regex(label: char) -> Regex {
    Regex::new(&format!(r"(?m)(^|[ \t])[*_]*(?:\({label}\)|{label}[).:])[*_]*[ \t]+")).unwrap()
}

static LABELS: LazyLock<Vec<Regex>> = LazyLock::new(|| OPTION_LABELS.iter().map(|&l| label_regex(l)).collect());

/// Byte range of a label match, excluding the leading whitespace the
/// pattern consumed.
fn find_label(re: &Regex, text: &str, from: usize, line_start_only: bool) -> Option<(usize, usize)> {
    re.captures_iter(&text[from..])
        .map(|c| {
            let lead = c.get(1).unwrap();
            let m = c.get(0).unwrap();
            (lead.is_empty(), from + lead.end(), from + m.end())
        })
        .find(|(at_line_start, _, _)| !line_start_only || *at_line_start)
        .map(|(_, s, e)| (s, e))
}

fn clean(text: &str) -> String {
    let mut t = collapse_whitespace(text);
    loop {
        let next = t.trim_matches(|c: char| matches!(c, '"' | '“' | '”' | '*')).trim();
        if next.len() == t.len() {
            return t;
        }
        t = next.to_string();
    }
}

fn parse_block(block: &str) -> Result<(String, Vec<String>, Option<char>), String> {
    let a = find_label(&LABELS[0], block, 0, true)
        .or_else(|| find_label(&LABELS[0], block, 0, false))
        .ok_or("no option A")?;
    let stem = clean(&block[..a.0]);
    if stem.is_empty() {
        return Err("empty stem".into());
    }
    let mut spans = vec![a];
    for re in &LABELS[1..] {
        let from = spans.last().unwrap().1;
        match find_label(re, block, from, false) {
            Some(span) => spans.push(span),
            None => break,
        }
    }
    let mut options = Vec::with_capacity(spans.len());
    for (i, &(_, body_start)) in spans.iter().enumerate() {
        let end = match spans.get(i + 1) {
            Some(next) => next.0,
            None => block[body_start..].find('\n').map(|n| body_start + n).unwrap_or(block.len()),
        };
        options.push(clean(&block[body_start..end]));
    }
    if options.len() < 2 {
        return Err(format!("only {} option(s)", options.len()));
    }
    if options.iter().any(String::is_empty) {
        return Err("empty option".into());
    }
    let last_end = spans.last().unwrap().1;
    let tail_start = block[last_end..].find('\n').map(|n| last_end + n).unwrap_or(block.len());
    let answer = ANSWER_LINE
        .captures(&block[tail_start..])
        .and_then(|c| c[1].chars().next())
        .filter(|l| OPTION_LABELS[..options.len()].contains(l));
    Ok((stem, options, answer))
}

/// Parses every `Qn.` block in a model output. Blocks without a stem or with
/// fewer than two options are dropped with a diagnostic.
pub fn parse_mcq_block(text: &str) -> ParsedQuestions {
    let text = text.replace("\r\n", "\n");
    let markers: Vec<_> = QUESTION_MARKER.find_iter(&text).collect();
    let mut out = ParsedQuestions::default();
    for (i, m) in markers.iter().enumerate() {
        let end = markers.get(i + 1).map(|n| n.start()).unwrap_or(text.len());
        let block = &text[m.end()..end];
        match parse_block(block) {
            Ok((stem, options, answer_letter)) => out.candidates.push(QuestionCandidate {
                ordinal: out.candidates.len() + 1,
                interrogative: stem.ends_with('?'),
                stem,
                options,
                answer_letter,
                raw: text[m.start()..end].trim().to_string(),
            }),
            Err(why) => out.diagnostics.push(format!("block {}: {why}", i + 1)),
        }
    }
    out
}

/// Canonical text form: one option per line, `Answer:` line when known.
pub fn render_candidates(candidates: &[QuestionCandidate]) -> String {
    let mut out = String::new();
    for (i, c) in candidates.iter().enumerate() {
        out.push_str(&format!("Q{}. {}\n", i + 1, c.stem));
        for (label, opt) in OPTION_LABELS.iter().zip(&c.options) {
            out.push_str(&format!("{label}) {opt}\n"));
        }
        if let Some(l) = c.answer_letter {
            out.push_str(&format!("Answer: {l}\n"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CANONICAL: &str = "Q1. What does ReLU do to negative values?\n\
                             A) Sets them to zero\nB) Doubles them\nC) Squares them\nD) Leaves them";

    #[test]
    fn canonical_block() {
        let p = parse_mcq_block(CANONICAL);
        assert_eq!(p.candidates.len(), 1);
        let c = &p.candidates[0];
        assert_eq!(c.stem, "What does ReLU do to negative values?");
        assert_eq!(c.options, ["Sets them to zero", "Doubles them", "Squares them", "Leaves them"]);
        assert!(c.interrogative);
        assert_eq!(c.answer_letter, None);
    }

    #[test]
    fn inline_options() {
        let p = parse_mcq_block("Q1: Which is a fruit? A) x B) y C) z D) w");
        assert_eq!(p.candidates[0].options, ["x", "y", "z", "w"]);
        assert_eq!(p.candidates[0].stem, "Which is a fruit?");
    }

    #[test]
    fn two_options_accepted() {
        let p = parse_mcq_block("Q1. What is X? A) a B) b");
        assert_eq!(p.candidates[0].options, ["a", "b"]);
    }

    #[test]
    fn prose_without_marker() {
        let p = parse_mcq_block("Here are some thoughts about ReLU. A) not a question");
        assert!(p.candidates.is_empty());
    }

    #[test]
    fn variants_and_crlf() {
        let text = "  **Q1)** Why?\r\n  (A) one\r\n  (B) two\r\n\r\nQ2. Stated plainly\r\nA. yes\r\nB. no\r\nAnswer: B\r\n";
        let p = parse_mcq_block(text);
        assert_eq!(p.candidates.len(), 2);
        assert_eq!(p.candidates[0].options, ["one", "two"]);
        assert!(!p.candidates[1].interrogative);
        assert_eq!(p.candidates[1].answer_letter, Some('B'));
        assert_eq!(p.candidates[1].ordinal, 2);
    }

    #[test]
    fn bad_blocks_are_dropped_with_diagnostics() {
        let text = "Q1. Only a stem?\nQ2. Good?\nA) a\nB) b\nQ3.\nA) a\nB) b";
        let p = parse_mcq_block(text);
        assert_eq!(p.candidates.len(), 1);
        assert_eq!(p.candidates[0].stem, "Good?");
        assert_eq!(p.candidates[0].ordinal, 1);
        assert_eq!(p.diagnostics.len(), 2);
    }

    #[test]
    fn stem_letters_are_not_labels() {
        let p = parse_mcq_block("Q1. Is vitamin A. needed?\nA) yes\nB) no");
        assert_eq!(p.candidates[0].stem, "Is vitamin A. needed?");
        assert_eq!(p.candidates[0].options, ["yes", "no"]);
    }

    #[test]
    fn quoted_output_format() {
        let p = parse_mcq_block("\"Q1. What is it?\nA) a\nB) b\nC) c\nD) d\"");
        assert_eq!(p.candidates[0].options[3], "d");
    }

    fn reparse_equal(text: &str) {
        let first = parse_mcq_block(text).candidates;
        let second = parse_mcq_block(&render_candidates(&first)).candidates;
        let a: Vec<_> = first.iter().map(QuestionCandidate::content).collect();
        let b: Vec<_> = second.iter().map(QuestionCandidate::content).collect();
        assert_eq!(a, b, "input: {text:?}");
    }

    #[test]
    fn idempotent_on_fixtures() {
        for text in [
            CANONICAL,
            "Q1: Which is a fruit? A) x B) y C) z D) w",
            "  **Q1)** Why?\r\n  (A) one\r\n  (B) two\r\nQ2. Plain\nA. yes\nB. no\nAnswer: B",
            "Q1. Is vitamin A. needed?\nA) yes\nB) no",
            "Q1. Mixed A) in stem\nA) x B) y\nC) z",
            "nothing here",
        ] {
            reparse_equal(text);
        }
    }

    proptest! {
        #[test]
        fn idempotent_on_generated_outputs(
            blocks in prop::collection::vec(
                ("[a-zA-Z ()?.:]{0,30}", prop::collection::vec("[a-zA-Z ().:]{0,12}", 0..5), any::<bool>(), any::<bool>()),
                0..7,
            )
        ) {
            let mut text = String::new();
            for (i, (stem, opts, inline, answer)) in blocks.iter().enumerate() {
                text.push_str(&format!("Q{}. {stem}", i + 1));
                for (l, o) in OPTION_LABELS.iter().zip(opts) {
                    text.push_str(if *inline { " " } else { "\n" });
                    text.push_str(&format!("{l}) {o}"));
                }
                if *answer {
                    text.push_str("\nAnswer: A");
                }
                text.push('\n');
            }
            reparse_equal(&text);
        }
    }
}
