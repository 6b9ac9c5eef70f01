use std::collections::BTreeMap;

/// String similarity in [0, 1] used when ranking operations.
pub trait Similarity: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Cosine similarity of character-trigram counts over lower-cased,
/// space-padded strings.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramCosine;

fn trigrams(s: &str) -> BTreeMap<[char; 3], f64> {
    let padded: Vec<char> = format!("  {} ", s.trim().to_lowercase()).chars().collect();
    let mut out = BTreeMap::new();
    for w in padded.windows(3) {
        *out.entry([w[0], w[1], w[2]]).or_insert(0.0) += 1.0;
    }
    out
}

impl Similarity for TrigramCosine {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        if a.trim().is_empty() || b.trim().is_empty() {
            return 0.0;
        }
        let (ta, tb) = (trigrams(a), trigrams(b));
        let dot: f64 = ta.iter().filter_map(|(k, v)| tb.get(k).map(|w| v * w)).sum();
        let na: f64 = ta.values().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = tb.values().map(|v| v * v).sum::<f64>().sqrt();
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_one_and_disjoint_is_zero() {
        let s = TrigramCosine;
        assert!((s.similarity("stir", "Stir") - 1.0).abs() < 1e-12);
        assert_eq!(s.similarity("abc", "xyz"), 0.0);
        assert_eq!(s.similarity("", "xyz"), 0.0);
        let near = s.similarity("titration", "titrate");
        assert!(near > 0.3 && near < 1.0);
    }
}
