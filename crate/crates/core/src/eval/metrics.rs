//! Sequence similarity over token lists.

use std::collections::HashMap;

/// Lower-case word tokens; punctuation other than `.`, `-` and `_` inside a
/// word separates tokens.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !(c.is_alphanumeric() || matches!(c, '.' | '-' | '_' | '%' | '°' | 'μ')))
        .map(|t| t.trim_matches('.').to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

fn lcs<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// LCS-based ROUGE-L F1.
pub fn rouge_l<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let l = lcs(a, b) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / a.len() as f64;
    let r = l / b.len() as f64;
    2.0 * p * r / (p + r)
}

fn ngrams<T: Eq + std::hash::Hash>(s: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut out = HashMap::new();
    for w in s.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// Sentence BLEU of `candidate` against `reference` with add-one smoothing
/// on the 2..=max_n precisions.
pub fn bleu<T: Eq + std::hash::Hash>(candidate: &[T], reference: &[T], max_n: usize) -> f64 {
    match (candidate.is_empty(), reference.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut log_sum = 0.0;
    let max_n = max_n.max(1);
    for n in 1..=max_n {
        let cand = ngrams(candidate, n);
        let refs = ngrams(reference, n);
        let total: usize = cand.values().sum();
        let matched: usize = cand.iter().map(|(g, c)| (*c).min(refs.get(g).copied().unwrap_or(0))).sum();
        let p = if n == 1 {
            if matched == 0 {
                return 0.0;
            }
            matched as f64 / total as f64
        } else {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / max_n as f64).exp()
}
