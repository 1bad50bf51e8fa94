//! A deterministic offline chat model.
//!
//! It recognises the pipeline's prompts and answers them the way a careful
//! model would: selections quote units near the timestamp verbatim, rewrites
//! keep the answer span, and generated questions are built from the context.
//! Every answer is a pure function of the prompt, so runs against it are
//! reproducible and exercise the whole pipeline without network access.

use std::time::Duration;

use async_trait::async_trait;
use lectureqg_core::llm::{ChatProvider, ChatRequest, ModelConfig, ProviderError, ProviderReply};
use lectureqg_core::util::sha256_hex;

#[derive(Debug, Clone, Default)]
pub struct SimulatedProvider {
    latency: Duration,
}

impl SimulatedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Delays every reply, to make interruption observable in tests.
    pub fn with_latency(latency: Duration) -> Self {
        SimulatedProvider { latency }
    }
}

#[async_trait]
impl ChatProvider for SimulatedProvider {
    async fn send(&self, _config: &ModelConfig, request: &ChatRequest) -> Result<ProviderReply, ProviderError> {
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        respond(request).map(ProviderReply::text)
    }
}

/// The simulated model's answer to `request`.
pub fn respond(request: &ChatRequest) -> Result<String, ProviderError> {
    let p = request.prompt.as_str();
    if let Some(img) = request.images.first() {
        return Ok(caption(&img.reference, &img.bytes));
    }
    if p.starts_with("You're an experienced STEM teacher") {
        return Ok(questions(p));
    }
    if p.starts_with("You task is to rewrite") {
        return Ok(rewrite(p));
    }
    let cot = p.contains("Please think step by step.");
    if p.contains("\nSlide Description:\n") {
        return Ok(select(p, "\nSlide Description:\n", cot, true));
    }
    if p.contains("\nLecture Transcript:\n") {
        return Ok(select(p, "\nLecture Transcript:\n", cot, false));
    }
    Err(ProviderError::Fatal("simulated model does not recognise this prompt".into()))
}

fn caption(reference: &str, bytes: &[u8]) -> String {
    let name = reference.rsplit('/').next().unwrap_or(reference);
    format!(
        "Slide {} shows a diagram with content digest {}.",
        name.trim_end_matches(".png"),
        &sha256_hex(bytes)[..8]
    )
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let Some(s) = text.find(start).map(|i| i + start.len()) else {
        return "";
    };
    match text[s..].find(end) {
        Some(e) => &text[s..s + e],
        None => &text[s..],
    }
}

fn contains_ci(haystack: &str, needle: &str) -> bool {
    !needle.is_empty() && haystack.to_lowercase().contains(&needle.to_lowercase())
}

/// `ID. text` lines of a listing.
fn units(listing: &str) -> Vec<(usize, &str)> {
    listing
        .lines()
        .filter_map(|l| {
            let (id, text) = l.split_once(". ")?;
            Some((id.trim().parse().ok()?, text.trim()))
        })
        .collect()
}

fn select(prompt: &str, marker: &str, cot: bool, slides: bool) -> String {
    let listing = between(prompt, marker, "\n\nAnswer to quiz question:");
    let answer = between(prompt, "Answer to quiz question:\n", "\n").trim();
    let anchor: usize = between(prompt, "\nTimestamp: ID ", "\n").trim().parse().unwrap_or(1);
    let units = units(listing);
    if units.is_empty() {
        return "Extracted Context: N/A".into();
    }
    let nearest = |pred: &dyn Fn(&(usize, &str)) -> bool| {
        units.iter().filter(|u| pred(u)).min_by_key(|(id, _)| (id.abs_diff(anchor), *id)).copied()
    };
    let at_anchor = nearest(&|_| true).expect("non-empty");
    let mut picked = vec![at_anchor];
    if let Some(hit) = nearest(&|(_, t)| contains_ci(t, answer)) {
        if hit.0 != at_anchor.0 {
            picked.push(hit);
        } else if let Some(next) = units.iter().find(|(id, _)| *id == at_anchor.0 + 1) {
            picked.push(*next);
        }
    }
    picked.sort_by_key(|(id, _)| *id);
    let ids: Vec<String> = picked.iter().map(|(id, _)| id.to_string()).collect();
    let quoted: Vec<String> = picked.iter().map(|(_, t)| format!("\"{t}\"")).collect();
    let quoted = quoted.join(" ");

    let label = if slides { "From Slides: " } else { "" };
    if !cot {
        return format!("Extracted Context: {label}{quoted}");
    }
    let reasoning = format!(
        "Reasoning: Unit {anchor} is at the timestamp and units {} relate to \"{answer}\".",
        ids.join(", ")
    );
    if slides {
        return format!("{reasoning}\nExtracted Context: From Slides: {quoted}");
    }
    let first = picked[0].0;
    let summary = units
        .iter()
        .rev()
        .find(|(id, _)| *id < first)
        .map(|(_, t)| format!("Just before, the lecture said: {t}"))
        .unwrap_or_else(|| "This part opens the lecture.".to_string());
    format!("{reasoning}\nExtracted Context:\nContextual summary: {summary}\nFrom Transcript Excerpt: {quoted}")
}

/// Quoted spans, or the lines when nothing is quoted.
fn spans(context: &str) -> Vec<String> {
    let quoted: Vec<String> = context
        .split('"')
        .skip(1)
        .step_by(2)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    if !quoted.is_empty() {
        return quoted;
    }
    context
        .lines()
        .map(|l| {
            let l = l.trim();
            match l.split_once(". ") {
                Some((n, rest)) if n.chars().all(|c| c.is_ascii_digit()) => rest,
                _ => l,
            }
        })
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

fn rewrite(prompt: &str) -> String {
    let context = between(prompt, "\nContexts:\n", "\nAnswer: ");
    let answer = between(prompt, "\nAnswer: ", "\n").trim();
    let spans = spans(context);
    let mut statements: Vec<String> = spans
        .iter()
        .filter(|s| contains_ci(s, answer))
        .map(|s| format!("{s} (specific)"))
        .collect();
    statements.push(format!("The lecture explains {answer}. (general)"));
    // A statement that drops the answer, as real models sometimes do.
    if let Some(other) = spans.iter().find(|s| !contains_ci(s, answer)) {
        statements.push(format!("{other} (specific)"));
    }
    statements.truncate(5);
    let list: Vec<String> = statements.iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)).collect();
    format!(
        "Reasoning: Kept the sentences that state \"{answer}\" and added one overview.\nRewritten Contexts:\n{}",
        list.join("\n")
    )
}

fn strip_labels(line: &str) -> &str {
    let line = line.trim();
    for label in ["Contextual summary:", "From Transcript Excerpt:", "From Keyframe Excerpt:", "From Slides:"] {
        if let Some(rest) = line.strip_prefix(label) {
            return rest.trim();
        }
    }
    match line.split_once(". ") {
        Some((n, rest)) if !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()) => rest,
        _ => line,
    }
}

fn blank_out(sentence: &str, answer: &str) -> String {
    let lower = sentence.to_lowercase();
    match lower.find(&answer.to_lowercase()) {
        Some(i) if !answer.is_empty() => format!("{}____{}", &sentence[..i], &sentence[i + answer.len()..]),
        _ => sentence.to_string(),
    }
}

fn questions(prompt: &str) -> String {
    let context = between(prompt, "Lecture Content: ", "\nCorrect Answer: ");
    let answer = between(prompt, "\nCorrect Answer: ", "\n").trim();
    let mut sentences: Vec<String> = Vec::new();
    for line in context.lines() {
        for s in spans(strip_labels(line)) {
            let s = s.trim_end_matches(['.', ' ']).to_string();
            if !s.is_empty() && !sentences.contains(&s) {
                sentences.push(s);
            }
        }
    }
    if sentences.is_empty() {
        return "No questions can be written for this content.".into();
    }
    let mut distractors: Vec<String> = Vec::new();
    for w in context.split(|c: char| !c.is_alphanumeric()) {
        let w = w.to_lowercase();
        if w.len() >= 4 && !contains_ci(answer, &w) && !distractors.contains(&w) {
            distractors.push(w);
        }
    }
    for filler in ["gradient", "matrix", "entropy", "kernel"] {
        if !distractors.iter().any(|d| d == filler) && !contains_ci(answer, filler) {
            distractors.push(filler.into());
        }
    }

    let n = if sentences.len() >= 3 { 5 } else { 3 };
    let mut out = Vec::new();
    for i in 0..n {
        let s = &sentences[i % sentences.len()];
        let stem = if contains_ci(s, answer) {
            format!("Which term completes the statement \"{}\"?", blank_out(s, answer))
        } else {
            format!("Which concept is described by \"{s}\"?")
        };
        let correct = i % 4;
        let mut options = Vec::new();
        let mut d = (i * 3) % distractors.len();
        for slot in 0..4 {
            if slot == correct {
                options.push(answer.to_string());
            } else {
                options.push(distractors[d].clone());
                d = (d + 1) % distractors.len();
            }
        }
        let letters = ['A', 'B', 'C', 'D'];
        let mut q = format!("Q{}. {stem}", i + 1);
        for (l, o) in letters.iter().zip(&options) {
            q.push_str(&format!("\n{l}) {o}"));
        }
        q.push_str(&format!("\nAnswer: {}", letters[correct]));
        out.push(q);
    }
    out.join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use lectureqg_core::context::prompts::{render, COT_TRANSCRIPT, DIRECT_KEYFRAMES, QUESTION_GENERATION, REWRITE};
    use lectureqg_core::context::{parse_rewrite, parse_selection};
    use lectureqg_core::llm::ImageInput;
    use lectureqg_core::qgen::parse_mcq_block;

    const LISTING: &str = "1. Neurons sum weighted inputs.\n2. The sigmoid squashes values.\n3. ReLU zeroes negative inputs.\n4. Deep nets stack layers.";

    fn ask(prompt: String) -> String {
        respond(&ChatRequest::text(prompt)).unwrap()
    }

    #[test]
    fn cot_selection_quotes_units_verbatim() {
        let p = render(COT_TRANSCRIPT, &[("context", LISTING), ("answer", "ReLU"), ("context_id", "2")]);
        let out = ask(p);
        let parsed = parse_selection(&out).unwrap();
        let texts: Vec<&str> = parsed.excerpts.iter().map(|(_, t)| t.as_str()).collect();
        assert_eq!(texts, ["The sigmoid squashes values.", "ReLU zeroes negative inputs."]);
        assert!(parsed.summary.contains("Neurons sum"));
    }

    #[test]
    fn slide_selection_is_labeled() {
        let p = render(DIRECT_KEYFRAMES, &[("context", LISTING), ("answer", "layers"), ("keyframe_id", "4")]);
        let out = ask(p);
        assert!(out.starts_with("Extracted Context: From Slides: \"Deep nets stack layers.\""), "{out}");
    }

    #[test]
    fn rewrite_keeps_answer_and_adds_a_distractor_statement() {
        let ctx = "From Transcript Excerpt: \"ReLU zeroes negative inputs.\" \"Deep nets stack layers.\"";
        let out = ask(render(REWRITE, &[("context", ctx), ("answer", "ReLU")]));
        let st = parse_rewrite(&out, 5).unwrap();
        assert_eq!(st.len(), 3);
        assert_eq!(st[0].text, "ReLU zeroes negative inputs.");
        assert_eq!(st[0].granularity, "specific");
        assert!(!st[2].text.contains("ReLU"));
    }

    #[test]
    fn questions_parse_and_contain_answer_option() {
        let p = render(QUESTION_GENERATION, &[("context", LISTING), ("answer", "ReLU"), ("timestamp_line", "Timestamp: 3\n")]);
        let parsed = parse_mcq_block(&ask(p));
        assert_eq!(parsed.candidates.len(), 5);
        for c in &parsed.candidates {
            assert!(c.options.iter().any(|o| o == "ReLU"), "{c:?}");
            assert!(c.stem.ends_with('?'));
        }
        assert!(parsed.candidates[2].stem.contains("____ zeroes"));
    }

    #[test]
    fn captions_depend_on_image_content() {
        let a = ChatRequest::text("describe").with_image(ImageInput::png("frames/0.png", vec![1]));
        let b = ChatRequest::text("describe").with_image(ImageInput::png("frames/0.png", vec![2]));
        assert_ne!(respond(&a).unwrap(), respond(&b).unwrap());
        assert!(respond(&a).unwrap().starts_with("Slide 0 "));
    }

    #[test]
    fn unknown_prompt_is_rejected() {
        assert!(respond(&ChatRequest::text("hello")).is_err());
    }
}
