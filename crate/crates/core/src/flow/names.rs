//! Reagent and container name matching.

use crate::dsl::DslSpec;
use crate::preprocess::lexicon::{is_in, DETERMINERS};
use crate::units::find_quantities;

/// Lower-case, markup-free, without leading quantities, "of" and determiners.
pub fn normalize_name(s: &str) -> String {
    let s: String = s.chars().filter(|c| !"@{}|<>[]~\"".contains(*c)).collect::<String>().to_lowercase();
    let mut s = s.trim().trim_end_matches(['.', ',', ';']).to_string();
    if let Some(q) = find_quantities(&s).into_iter().find(|q| q.start == 0) {
        s = s[q.end..].to_string();
    }
    let words: Vec<&str> = s.split_whitespace().collect();
    let skip = words.iter().take_while(|w| is_in(DETERMINERS, w) || **w == "of").count();
    words[skip..].join(" ")
}

/// Normalized names equal up to a plural `s`.
pub fn same_name(a: &str, b: &str) -> bool {
    let fold = |s: &str| {
        if s.len() > 3 {
            s.strip_suffix("es").filter(|t| t.ends_with(['s', 'x', 'h'])).or_else(|| s.strip_suffix('s')).unwrap_or(s).to_string()
        } else {
            s.to_string()
        }
    };
    !a.is_empty() && (a == b || fold(a) == fold(b))
}

/// The normalized text when it names a container from the vocabulary.
pub fn container_text(s: &str, spec: &DslSpec) -> Option<String> {
    let n = normalize_name(s);
    spec.vocabulary("container").iter().any(|c| n == *c || n.ends_with(&format!(" {c}"))).then_some(n)
}

/// Allocated vessel symbols such as `plate_1`.
pub(crate) fn looks_like_vessel(s: &str, spec: &DslSpec) -> bool {
    let Some((stem, n)) = s.rsplit_once('_') else { return false };
    n.parse::<usize>().is_ok()
        && (spec.operations().any(|o| o.vessel.as_deref() == Some(stem)) || spec.vocabulary("container").iter().any(|c| c == stem))
}

pub(crate) fn is_anaphora(s: &str, spec: &DslSpec) -> bool {
    let n = normalize_name(s);
    spec.vocabulary("anaphora").contains(&n)
}

/// Identifier-safe form of a reagent name.
pub(crate) fn symbolize(s: &str) -> String {
    let mut out = String::new();
    for c in normalize_name(s).chars() {
        if c.is_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    let out = out.trim_matches('_').to_string();
    if out.is_empty() || out.starts_with(|c: char| c.is_ascii_digit()) {
        format!("r_{out}")
    } else {
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_name("the @onions@"), "onions");
        assert_eq!(normalize_name("35 mL of water"), "water");
        assert!(same_name("onion", "onions"));
        assert!(same_name("dish", "dishes"));
        assert!(!same_name("", ""));
        assert_eq!(symbolize("sodium chloride"), "sodium_chloride");
    }
}
