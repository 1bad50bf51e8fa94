//! Prompt templates and their renderer.
//!
//! Templates live in `assets/prompts/` and use `{name}` placeholders.
//! Rendering is a single left-to-right pass: substituted values are never
//! re-scanned, so a value that happens to contain `{answer}` stays literal.

pub const DIRECT_TRANSCRIPT: &str = include_str!("../../assets/prompts/direct_transcript.txt");
pub const COT_TRANSCRIPT: &str = include_str!("../../assets/prompts/cot_transcript.txt");
pub const DIRECT_KEYFRAMES: &str = include_str!("../../assets/prompts/direct_keyframes.txt");
pub const COT_KEYFRAMES: &str = include_str!("../../assets/prompts/cot_keyframes.txt");
pub const REWRITE: &str = include_str!("../../assets/prompts/rewrite.txt");
pub const QUESTION_GENERATION: &str = include_str!("../../assets/prompts/qg.txt");

/// Replaces every `{name}` whose name is in `vars`. Unknown placeholders and
/// unmatched braces are copied through unchanged.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + vars.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let value = after
            .find('}')
            .and_then(|close| vars.iter().find(|(k, _)| *k == &after[..close]).map(|(_, v)| (close, *v)));
        match value {
            Some((close, v)) => {
                out.push_str(v);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn placeholders_present() {
        for t in [DIRECT_TRANSCRIPT, COT_TRANSCRIPT] {
            assert!(t.contains("{context}") && t.contains("{answer}") && t.contains("{context_id}"));
        }
        for t in [DIRECT_KEYFRAMES, COT_KEYFRAMES] {
            assert!(t.contains("{context}") && t.contains("{answer}") && t.contains("{keyframe_id}"));
        }
        assert!(REWRITE.contains("{context}") && REWRITE.contains("{answer}"));
        assert!(QUESTION_GENERATION.contains("{timestamp_line}"));
    }

    #[test]
    fn cot_templates_extend_direct_instructions() {
        let body = DIRECT_TRANSCRIPT.split("Output format:").next().unwrap();
        assert!(COT_TRANSCRIPT.starts_with(body));
        assert!(COT_TRANSCRIPT.contains("Reasoning: [your reasoning process]"));
        let body = DIRECT_KEYFRAMES.split("\n\nOutput format:").next().unwrap();
        assert!(COT_KEYFRAMES.starts_with(body));
    }

    #[test]
    fn single_pass_substitution() {
        let out = render("{a}-{b}-{c}", &[("a", "{b}"), ("b", "x")]);
        assert_eq!(out, "{b}-x-{c}");
        assert_eq!(render("open { brace", &[("a", "1")]), "open { brace");
    }

    #[test]
    fn fully_rendered_selection_prompt_has_no_placeholders() {
        let p = render(DIRECT_TRANSCRIPT, &[("context", "1. hi"), ("answer", "ReLU"), ("context_id", "1")]);
        assert!(!p.contains("{context}") && !p.contains("{answer}") && !p.contains("{context_id}"));
        assert!(p.contains("the answer \"ReLU\""));
    }

    proptest! {
        // distinct (context, answer, id) never collide under the same template
        #[test]
        fn rendering_is_injective(
            a in ("[a-z {}.\n]{0,12}", "[a-z {}.]{0,8}", 1usize..50),
            b in ("[a-z {}.\n]{0,12}", "[a-z {}.]{0,8}", 1usize..50),
        ) {
            let r = |(c, ans, id): &(String, String, usize)| {
                let id = id.to_string();
                [DIRECT_TRANSCRIPT, COT_KEYFRAMES, REWRITE]
                    .map(|t| render(t, &[("context", c), ("answer", ans), ("context_id", &id), ("keyframe_id", &id)]))
            };
            let (ra, rb) = (r(&a), r(&b));
            for i in 0..3 {
                prop_assert_eq!(ra[i] == rb[i], i == 2 && (a.0 == b.0 && a.1 == b.1) || a == b);
            }
        }
    }
}
