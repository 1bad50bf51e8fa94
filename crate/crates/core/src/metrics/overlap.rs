//! Token-overlap metrics: ROUGE-L and sentence BLEU.

use std::collections::HashMap;

use crate::text::metric_tokens;

/// Length of the longest common subsequence.
///
/// Bit-parallel (Allison–Dix / Hyyrö): one bit per reference position, one
/// word-wide add per candidate token, so long references stay cheap.
pub fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let words = b.len().div_ceil(64);
    let mut masks: HashMap<&str, Vec<u64>> = HashMap::new();
    for (j, tok) in b.iter().enumerate() {
        masks.entry(tok.as_ref()).or_insert_with(|| vec![0; words])[j / 64] |= 1 << (j % 64);
    }
    let zero = vec![0u64; words];
    let mut v = vec![u64::MAX; words];
    for tok in a {
        let m = masks.get(tok.as_ref()).unwrap_or(&zero);
        // v = (v + (v & m)) | (v & !m), with carry across words
        let mut carry = 0u64;
        for w in 0..words {
            let u = v[w] & m[w];
            let (s1, c1) = v[w].overflowing_add(u);
            let (s2, c2) = s1.overflowing_add(carry);
            carry = u64::from(c1 || c2);
            v[w] = s2 | (v[w] & !m[w]);
        }
    }
    let tail = b.len() % 64;
    let zeros: u32 = v
        .iter()
        .enumerate()
        .map(|(w, &x)| {
            let x = if w == words - 1 && tail != 0 { x | (u64::MAX << tail) } else { x };
            x.count_zeros()
        })
        .sum();
    zeros as usize
}

/// ROUGE-L F1 (β = 1) over token sequences. Empty input scores 0.
pub fn rouge_l_f1<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-L F1 on raw text, lowercased whitespace tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    rouge_l_f1(&metric_tokens(candidate), &metric_tokens(reference))
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(|t| t.as_ref()).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU with uniform weights over orders 1..=n, clipped n-gram
/// precision and the brevity penalty. No smoothing: any order with zero
/// matches gives 0. Orders for which neither side has an n-gram (both
/// sentences shorter than the order) are left out of the mean.
pub fn bleu_n<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> f64 {
    assert!(n >= 1, "BLEU order must be at least 1");
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for k in 1..=n {
        let cand = ngram_counts(candidate, k);
        let total: usize = cand.values().sum();
        if total == 0 && reference.len() < k {
            continue;
        }
        if total == 0 {
            return 0.0;
        }
        let refs = ngram_counts(reference, k);
        let matched: usize = cand
            .iter()
            .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        if matched == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / total as f64).ln();
        orders += 1;
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / orders as f64).exp()
}

pub fn bleu(candidate: &str, reference: &str, n: usize) -> f64 {
    bleu_n(&metric_tokens(candidate), &metric_tokens(reference), n)
}
