//! Parsers for selection and rewrite model outputs.
//!
//! Models drift from the requested format in predictable ways: markdown
//! emphasis around headers, numbered headers, inline labels, quoting or
//! bracketing each excerpt, ellipses at excerpt edges. The parsers accept
//! those variants and nothing else; an output without the final header is
//! a parse failure.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no {0:?} header in model output")]
    MissingHeader(&'static str),
    #[error("{0:?} block is empty")]
    EmptyBlock(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcerptSource {
    /// No label, or a label the caller should attribute to the modality it asked for.
    Unlabeled,
    Transcript,
    Keyframes,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedSelection {
    pub reasoning: String,
    pub summary: String,
    pub excerpts: Vec<(ExcerptSource, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedStatement {
    pub text: String,
    pub granularity: String,
}

// Header at line start: optional quote/markdown/numbering decoration.
const LINE_DECOR: &str = r#"(?im)^[ \t"'“*#>_-]*(?:\d+[.)]\s*)?[*_]*"#;

static EXTRACTED_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"{LINE_DECOR}extracted(?: transcript| slide)? (?:contexts?|excerpts?)[*_]*\s*:[*_]*"
    ))
    .unwrap()
});
static REASONING_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"{LINE_DECOR}reasoning[*_]*\s*:[*_]*")).unwrap());
static REWRITTEN_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"{LINE_DECOR}rewritten (?:contexts?|statements?)[*_]*\s*:[*_]*")).unwrap()
});
static SUMMARY_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"{LINE_DECOR}contextual summary[*_]*\s*:[*_]*")).unwrap());
// Section labels may also appear mid-line.
static SECTION_LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)[*_]*(contextual summary|from transcripts?(?: excerpts?)?|from slides?(?: excerpts?)?|from keyframes?(?: excerpts?)?)[*_]*\s*:[*_]*",
    )
    .unwrap()
});
static QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""([^"]+)"|“([^”]+)”"#).unwrap());
static BRACKETED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[([^\]]+)\]").unwrap());
static LIST_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:\d+[.)]|[-*•])\s+").unwrap());
static GRANULARITY_TAG: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\s*\((general|conceptual|specific|technical|detailed|intermediate)(?: level)?\)\s*$").unwrap()
});

fn last_match(re: &Regex, text: &str) -> Option<(usize, usize)> {
    re.find_iter(text).last().map(|m| (m.start(), m.end()))
}

fn trim_quotes(s: &str) -> &str {
    s.trim().trim_matches(|c: char| matches!(c, '"' | '“' | '”') || c.is_whitespace())
}

/// Parses a context-selection output. Only text after the last
/// "Extracted Context:" header counts as the selection; any "Reasoning:"
/// before it is kept for audit.
pub fn parse_selection(output: &str) -> Result<ParsedSelection, ParseError> {
    let text = output.replace("\r\n", "\n");
    let (hs, he) = last_match(&EXTRACTED_HEADER, &text).ok_or(ParseError::MissingHeader("Extracted Context"))?;
    let before = &text[..hs];
    let block = &text[he..];

    let mut parsed = ParsedSelection::default();
    if let Some((_, re)) = last_match(&REASONING_HEADER, before) {
        parsed.reasoning = trim_quotes(&before[re..]).to_string();
    }

    let labels: Vec<_> = SECTION_LABEL.captures_iter(block).collect();
    let mut sections: Vec<(ExcerptSource, &str)> = Vec::new();
    let mut summary: Option<&str> = None;
    let first = labels.first().map(|c| c.get(0).unwrap().start()).unwrap_or(block.len());
    sections.push((ExcerptSource::Unlabeled, &block[..first]));
    for (i, cap) in labels.iter().enumerate() {
        let end = labels.get(i + 1).map(|c| c.get(0).unwrap().start()).unwrap_or(block.len());
        let body = &block[cap.get(0).unwrap().end()..end];
        let name = cap[1].to_ascii_lowercase();
        if name.starts_with("contextual") {
            summary = Some(body);
        } else if name.contains("transcript") {
            sections.push((ExcerptSource::Transcript, body));
        } else {
            sections.push((ExcerptSource::Keyframes, body));
        }
    }

    // a summary given ahead of the header ("1. Contextual Summary: ...")
    if summary.is_none() {
        if let Some((_, se)) = last_match(&SUMMARY_HEADER, before) {
            let body = &before[se..];
            let end = REASONING_HEADER.find(body).map(|m| m.start()).unwrap_or(body.len());
            summary = Some(&body[..end]);
        }
    }
    parsed.summary = summary.map(|s| trim_quotes(s).to_string()).unwrap_or_default();

    for (source, body) in sections {
        for e in split_excerpts(body) {
            parsed.excerpts.push((source, e));
        }
    }
    if parsed.excerpts.is_empty() {
        return Err(ParseError::EmptyBlock("Extracted Context"));
    }
    Ok(parsed)
}

/// Splits a section body into excerpts: quoted spans if any, else bracketed
/// spans, else non-empty lines. List markers and edge ellipses are removed.
pub fn split_excerpts(body: &str) -> Vec<String> {
    let body = body.trim();
    let quoted: Vec<&str> = QUOTED
        .captures_iter(body)
        .filter_map(|c| c.get(1).or(c.get(2)).map(|m| m.as_str()))
        .collect();
    let raw: Vec<&str> = if !quoted.is_empty() {
        quoted
    } else {
        let bracketed: Vec<&str> = BRACKETED.captures_iter(body).map(|c| c.get(1).unwrap().as_str()).collect();
        if !bracketed.is_empty() {
            bracketed
        } else {
            body.lines().collect()
        }
    };
    raw.into_iter().filter_map(clean_excerpt).collect()
}

fn clean_excerpt(raw: &str) -> Option<String> {
    let mut s = trim_quotes(raw);
    s = LIST_MARKER.find(s).map(|m| &s[m.end()..]).unwrap_or(s);
    loop {
        let before = s;
        s = s.trim();
        s = s.strip_prefix("...").or_else(|| s.strip_prefix('…')).unwrap_or(s);
        s = s.strip_suffix("...").or_else(|| s.strip_suffix('…')).unwrap_or(s);
        s = trim_quotes(s);
        if s == before {
            break;
        }
    }
    let lower = s.to_ascii_lowercase();
    if s.is_empty() || matches!(lower.as_str(), "n/a" | "none" | "none." | "-") {
        return None;
    }
    Some(s.to_string())
}

/// Parses a rewrite output into at most `max` statements.
pub fn parse_rewrite(output: &str, max: usize) -> Result<Vec<ParsedStatement>, ParseError> {
    let text = output.replace("\r\n", "\n");
    let (_, he) = last_match(&REWRITTEN_HEADER, &text).ok_or(ParseError::MissingHeader("Rewritten Contexts"))?;
    let mut block = text[he..].trim();
    if block.starts_with('[') && block.ends_with(']') {
        block = &block[1..block.len() - 1];
    }
    let block = trim_quotes(block);

    let lines: Vec<&str> = block.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let pieces: Vec<String> = if lines.len() == 1 {
        split_inline_numbering(lines[0])
    } else {
        lines.iter().map(|l| l.to_string()).collect()
    };

    let statements: Vec<ParsedStatement> = pieces
        .iter()
        .filter_map(|p| {
            let text = clean_excerpt(p)?;
            let (text, granularity) = match GRANULARITY_TAG.captures(&text) {
                Some(c) => (text[..c.get(0).unwrap().start()].trim().to_string(), c[1].to_ascii_lowercase()),
                None => (text, String::new()),
            };
            (!text.is_empty()).then_some(ParsedStatement { text, granularity })
        })
        .take(max)
        .collect();
    if statements.is_empty() {
        return Err(ParseError::EmptyBlock("Rewritten Contexts"));
    }
    Ok(statements)
}

/// "1. a 2. b 3. c" on one line. Numbers must run consecutively from 1,
/// otherwise the line is one statement.
fn split_inline_numbering(line: &str) -> Vec<String> {
    let starts_numbered = line.starts_with("1.") || line.starts_with("1)");
    if !starts_numbered {
        return vec![line.to_string()];
    }
    let mut cuts = vec![0];
    let mut n = 2;
    let mut from = 2;
    loop {
        let dot = format!(" {n}. ");
        let paren = format!(" {n}) ");
        let hit = [line[from..].find(&dot), line[from..].find(&paren)].into_iter().flatten().min();
        match hit {
            Some(off) => {
                cuts.push(from + off + 1);
                from = from + off + 1 + dot.len() - 1;
                n += 1;
            }
            None => break,
        }
    }
    cuts.push(line.len());
    cuts.windows(2).map(|w| line[w[0]..w[1]].trim().to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_format() {
        let p = parse_selection("Extracted Context: so anything positive passes.").unwrap();
        assert_eq!(p.excerpts, vec![(ExcerptSource::Unlabeled, "so anything positive passes.".to_string())]);
        assert!(p.reasoning.is_empty());
    }

    #[test]
    fn cot_format_with_labels_and_quotes() {
        let out = "Reasoning: segment 4 defines it.\nThen 5 explains.\n\
                   Extracted Context:\nContextual summary: Activations in CNNs.\n\
                   From Transcript Excerpt: \"first part\" \"second part\"";
        let p = parse_selection(out).unwrap();
        assert_eq!(p.reasoning, "segment 4 defines it.\nThen 5 explains.");
        assert_eq!(p.summary, "Activations in CNNs.");
        assert_eq!(
            p.excerpts,
            vec![
                (ExcerptSource::Transcript, "first part".to_string()),
                (ExcerptSource::Transcript, "second part".to_string())
            ]
        );
    }

    #[test]
    fn slides_label() {
        let p = parse_selection("Reasoning: r\nExtracted Context: From Slides: [ReLU sets negatives to zero.]").unwrap();
        assert_eq!(p.excerpts, vec![(ExcerptSource::Keyframes, "ReLU sets negatives to zero.".to_string())]);
    }

    #[test]
    fn reasoning_only_is_missing_header() {
        assert_eq!(
            parse_selection("Reasoning: I looked at segment 3 and it is relevant."),
            Err(ParseError::MissingHeader("Extracted Context"))
        );
    }

    #[test]
    fn header_mention_inside_reasoning_does_not_count() {
        // the last line-start header wins
        let out = "Reasoning: the extracted context: should be short\n**Extracted Context:** \"kept\"";
        let p = parse_selection(out).unwrap();
        assert_eq!(p.excerpts[0].1, "kept");
    }

    #[test]
    fn numbered_lines_and_ellipses_stripped() {
        let out = "Extracted Context:\n4. alpha beta\n5. ...gamma delta...\n\n";
        let p = parse_selection(out).unwrap();
        let texts: Vec<_> = p.excerpts.iter().map(|(_, t)| t.as_str()).collect();
        assert_eq!(texts, ["alpha beta", "gamma delta"]);
    }

    #[test]
    fn summary_before_header() {
        let out = "1. Contextual Summary: Background here.\n2. Extracted Transcript Excerpts: \"x y\"";
        let p = parse_selection(out).unwrap();
        assert_eq!(p.summary, "Background here.");
        assert_eq!(p.excerpts[0].1, "x y");
    }

    #[test]
    fn empty_block_is_error() {
        assert_eq!(parse_selection("Extracted Context:  \n"), Err(ParseError::EmptyBlock("Extracted Context")));
    }

    #[test]
    fn crlf_tolerated() {
        let p = parse_selection("Reasoning: r\r\nExtracted Context: From Transcript Excerpt: \"a b\"\r\n").unwrap();
        assert_eq!(p.excerpts[0].1, "a b");
    }

    #[test]
    fn rewrite_lines() {
        let out = "Reasoning: fine\nRewritten Contexts:\n1. ReLU is common.\n2. ReLU operates pixel-by-pixel. (specific)\n";
        let s = parse_rewrite(out, 5).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].text, "ReLU operates pixel-by-pixel.");
        assert_eq!(s[1].granularity, "specific");
    }

    #[test]
    fn rewrite_inline_numbering_and_cap() {
        let out = "Rewritten Contexts: [1. a one. 2. b two. 3. c three. 4. d. 5. e. 6. f.]";
        let s = parse_rewrite(out, 5).unwrap();
        let texts: Vec<_> = s.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["a one.", "b two.", "c three.", "d.", "e."]);
    }

    #[test]
    fn rewrite_without_header_fails() {
        assert!(parse_rewrite("1. a\n2. b", 5).is_err());
    }

    #[test]
    fn inline_numbers_must_be_consecutive() {
        assert_eq!(split_inline_numbering("1. version 3. is out"), ["1. version 3. is out"]);
    }
}
