//! Hard validators for selected and rewritten context.

use crate::text::collapse_whitespace;

/// An excerpt passes when, after collapsing whitespace on both sides, it is
/// a contiguous substring of the reference text. Case and punctuation must
/// match exactly.
pub fn validate_integrity(excerpt: &str, reference: &str) -> bool {
    let e = collapse_whitespace(excerpt);
    !e.is_empty() && collapse_whitespace(reference).contains(&e)
}

/// Same check against a reference that is already whitespace-collapsed.
pub(crate) fn integrity_against_normalized(excerpt: &str, normalized_reference: &str) -> bool {
    let e = collapse_whitespace(excerpt);
    !e.is_empty() && normalized_reference.contains(&e)
}

fn explicit_form(text: &str) -> String {
    collapse_whitespace(&text.to_lowercase())
}

/// The answer with trailing sentence punctuation removed, lowercased and
/// whitespace-collapsed.
pub fn normalized_answer(answer: &str) -> String {
    explicit_form(answer)
        .trim_end_matches(['.', '!', '?', ';', ':', ','])
        .trim_end()
        .to_string()
}

/// A statement passes when it contains the answer word for word, ignoring
/// case, whitespace runs and the answer's trailing punctuation.
pub fn validate_explicitness(statement: &str, answer: &str) -> bool {
    let a = normalized_answer(answer);
    !a.is_empty() && explicit_form(statement).contains(&a)
}
