//! Small text helpers shared by the corpus, validators and metrics.

/// Whitespace tokenization after trimming. Used for every word count.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

pub fn word_count(text: &str) -> usize {
    words(text).count()
}

/// Collapses every run of whitespace into a single space and trims the ends.
/// Case and punctuation are left untouched.
pub fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for w in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

/// Lowercased whitespace tokens, the tokenization used by ROUGE-L and BLEU.
pub fn metric_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}
