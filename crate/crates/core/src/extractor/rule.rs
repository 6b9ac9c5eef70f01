//! Offline extraction: markup, unit, alias and vocabulary recognizers plus a
//! small noun-phrase chunker.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use super::NerContext;
use crate::dsl::DslSpec;
use crate::preprocess::entities::{Entity, Label};
use crate::preprocess::lexicon::*;
use crate::units::find_quantities;

const MARKUP_CHARS: &str = "@<>|{}[]~";

fn markup_regexes() -> &'static [(Regex, Option<Label>)] {
    static RE: OnceLock<Vec<(Regex, Option<Label>)>> = OnceLock::new();
    RE.get_or_init(|| {
        vec![
            (Regex::new(r"@([^@\n]+)@").unwrap(), Some(Label::Reagent)),
            (Regex::new(r"\{([^{}\n]+)\}").unwrap(), Some(Label::Reagent)),
            (Regex::new(r"<([^<>\n]+)>").unwrap(), Some(Label::Temperature)),
            (Regex::new(r"\|([^|\n]+)\|").unwrap(), Some(Label::Duration)),
            (Regex::new(r"(\d+(?:\s+\d+/\d+|/\d+|\.\d+)?\s*\[[^\]\n]+\])").unwrap(), None),
        ]
    })
}

fn bare_count_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(\d+)\s+[A-Za-z]").unwrap())
}

fn overlaps(taken: &[Entity], s: usize, e: usize) -> bool {
    taken.iter().any(|t| s < t.span.1 && t.span.0 < e)
}

fn vocabulary_label(class: &str) -> Label {
    match class {
        "anaphora" | "reagent" | "ingredient" => Label::Reagent,
        other => other.parse().unwrap_or(Label::Other),
    }
}

/// Verbs known to the DSL plus common imperative verbs.
pub(crate) fn verb_set(spec: Option<&DslSpec>) -> BTreeSet<String> {
    let mut verbs: BTreeSet<String> = COMMON_VERBS.iter().map(|s| s.to_string()).collect();
    if let Some(spec) = spec {
        for op in spec.operations() {
            verbs.insert(op.name.clone());
            for s in &op.synonyms {
                if let Some(first) = s.split_whitespace().next() {
                    verbs.insert(first.to_string());
                }
            }
        }
        for hook in spec.semantics.control.hooks.values() {
            for v in &hook.verbs {
                if let Some(first) = v.split_whitespace().next() {
                    verbs.insert(first.to_string());
                }
            }
        }
    }
    verbs
}

fn is_closed(w: &str) -> bool {
    [DETERMINERS, REAGENT_PREPS, PLACE_PREPS, CONNECTORS, ADVERBS, BREAK_WORDS, NEGATIONS, SUBORDINATORS].iter().any(|list| is_in(list, w))
}

/// Recognize entities in `text`; spans are relative to `text`.
pub fn rule_entities(text: &str, ctx: &NerContext<'_>) -> Vec<Entity> {
    let mut found: Vec<Entity> = Vec::new();

    for (re, fixed) in markup_regexes() {
        for c in re.captures_iter(text) {
            let m = c.get(1).unwrap();
            let inner = m.as_str();
            let lead = inner.len() - inner.trim_start().len();
            let (s, e) = (m.start() + lead, m.start() + inner.trim_end().len());
            if s >= e || overlaps(&found, s, e) {
                continue;
            }
            let mut ent = Entity::new(&text[s..e], (s, e), Label::Other, 1.0);
            ent.label = match (fixed, ent.quantity()) {
                (Some(Label::Reagent), _) => Label::Reagent,
                (_, Some(q)) if q.unit.is_some() => Label::for_dimension(q.dimension(), q.unit.as_deref()),
                (Some(l), _) => *l,
                (None, _) => Label::Other,
            };
            found.push(ent);
        }
    }

    for m in find_quantities(text) {
        if overlaps(&found, m.start, m.end) {
            continue;
        }
        let label = Label::for_dimension(m.quantity.dimension(), m.quantity.unit.as_deref());
        found.push(Entity::new(&text[m.start..m.end], (m.start, m.end), label, 0.95));
    }

    if let Some(spec) = ctx.spec {
        for (proxy, param, q) in spec.all_aliases() {
            let label = spec
                .parameter(param)
                .and_then(|p| p.labels.first())
                .and_then(|l| l.parse().ok())
                .unwrap_or_else(|| Label::for_dimension(q.dimension(), q.unit.as_deref()));
            for (s, e) in find_phrase(text, proxy) {
                if !overlaps(&found, s, e) {
                    found.push(Entity::new(&text[s..e], (s, e), label, 0.9));
                }
            }
        }
    }

    let mut terms: Vec<(String, Label)> = Vec::new();
    if let Some(spec) = ctx.spec {
        for (class, words) in &spec.terminals.vocabulary {
            let label = vocabulary_label(class);
            terms.extend(words.iter().map(|w| (w.to_lowercase(), label)));
        }
    }
    terms.extend(ctx.lexicon.iter().map(|w| (w.to_lowercase(), Label::Reagent)));
    terms.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
    terms.dedup_by(|a, b| a.0 == b.0);
    for (term, label) in &terms {
        for (s, e) in find_phrase(text, term) {
            if !overlaps(&found, s, e) {
                found.push(Entity::new(&text[s..e], (s, e), *label, 0.85));
            }
        }
    }

    for c in bare_count_regex().captures_iter(text) {
        let m = c.get(1).unwrap();
        if !overlaps(&found, m.start(), m.end()) {
            found.push(Entity::new(m.as_str(), (m.start(), m.end()), Label::Count, 0.7));
        }
    }

    chunk_noun_phrases(text, ctx.spec, &mut found);

    found.sort_by_key(|e| e.span);
    let allowed = |l: Label| ctx.labels.contains(&l);
    found
        .into_iter()
        .filter_map(|mut e| {
            if allowed(e.label) {
                Some(e)
            } else if allowed(Label::Other) {
                e.label = Label::Other;
                Some(e)
            } else {
                None
            }
        })
        .collect()
}

fn continuation(last: Option<Label>) -> Option<Label> {
    match last {
        Some(Label::Reagent) => Some(Label::Reagent),
        Some(Label::Other | Label::Container) => Some(Label::Other),
        _ => None,
    }
}

fn chunk_noun_phrases(text: &str, spec: Option<&DslSpec>, found: &mut Vec<Entity>) {
    let verbs = verb_set(spec);
    let tokens = tokenize(text);
    let covering = |found: &[Entity], t: &Token| found.iter().find(|e| t.start >= e.span.0 && t.start < e.span.1).map(|e| e.label);

    let mut expect: Option<Label> = None;
    let mut clause_start = true;
    let mut last: Option<Label> = None;
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        if let Some(label) = covering(found, t) {
            if label == Label::Speed {
                // pace proxies read like adverbs
                i += 1;
                continue;
            }
            expect = if label.is_quantity() { Some(Label::Reagent) } else { None };
            last = Some(label);
            clause_start = false;
            i += 1;
            continue;
        }
        match t.kind {
            TokenKind::Punct => {
                if t.text == "," {
                    expect = continuation(last);
                    clause_start = true;
                } else if !MARKUP_CHARS.contains(t.text.as_str()) {
                    expect = None;
                    last = None;
                    clause_start = true;
                }
            }
            TokenKind::Number => {
                expect = None;
                clause_start = false;
            }
            TokenKind::Word => {
                let w = t.lower.as_str();
                if verbs.contains(w) && (clause_start || expect.is_none()) {
                    expect = Some(Label::Reagent);
                    last = None;
                    clause_start = false;
                } else if is_in(DETERMINERS, w) || is_in(ADVERBS, w) {
                    clause_start = false;
                } else if is_in(REAGENT_PREPS, w) {
                    expect = Some(Label::Reagent);
                    clause_start = false;
                } else if is_in(PLACE_PREPS, w) {
                    expect = Some(Label::Other);
                    clause_start = false;
                } else if w == "and" || w == "or" {
                    expect = continuation(last);
                    clause_start = true;
                } else if is_in(CONNECTORS, w) {
                    expect = None;
                    clause_start = true;
                } else if is_closed(w) {
                    expect = None;
                    last = None;
                    clause_start = false;
                } else if let Some(label) = expect {
                    let mut j = i;
                    while j < tokens.len()
                        && j - i < 4
                        && tokens[j].kind == TokenKind::Word
                        && !is_closed(&tokens[j].lower)
                        && covering(found, &tokens[j]).is_none()
                    {
                        j += 1;
                    }
                    let head = &tokens[j - 1].lower;
                    if !is_in(STOP_NOUNS, head) {
                        let (s, e) = (t.start, tokens[j - 1].end);
                        found.push(Entity::new(&text[s..e], (s, e), label, 0.5));
                        last = Some(label);
                    } else {
                        last = None;
                    }
                    expect = None;
                    clause_start = false;
                    i = j;
                    continue;
                } else if clause_start {
                    // an unlisted imperative verb
                    expect = Some(Label::Reagent);
                    clause_start = false;
                } else {
                    clause_start = false;
                }
            }
        }
        i += 1;
    }
}

fn name_tokens(s: &str) -> BTreeSet<String> {
    tokenize(s)
        .into_iter()
        .filter(|t| t.kind != TokenKind::Punct)
        .map(|t| {
            let w = t.lower;
            if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") {
                w[..w.len() - 1].to_string()
            } else {
                w
            }
        })
        .filter(|w| !is_in(DETERMINERS, w))
        .collect()
}

/// Candidate sharing most name tokens with the instruction; ties keep list order.
pub fn rule_output(instruction_text: &str, candidates: &[String]) -> Option<String> {
    let words = name_tokens(instruction_text);
    let mut best: Option<(usize, &String)> = None;
    for c in candidates {
        let score = name_tokens(c).intersection(&words).count();
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, c));
        }
    }
    best.map(|(_, c)| c.clone())
}

/// Fill `missing` empty reagent slots with the most recent candidates not
/// already named by the instruction. Candidates are in memory order.
pub fn rule_missing(named: &[String], candidates: &[String], missing: usize) -> Vec<String> {
    let named: Vec<BTreeSet<String>> = named.iter().map(|n| name_tokens(n)).collect();
    let mut picked: Vec<String> = candidates
        .iter()
        .rev()
        .filter(|c| {
            let toks = name_tokens(c);
            !named.iter().any(|n| !n.is_empty() && *n == toks)
        })
        .take(missing)
        .cloned()
        .collect();
    picked.reverse();
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::load_dsl_spec;
    use crate::preprocess::entities::LABELS;

    fn spec(name: &str) -> DslSpec {
        load_dsl_spec(format!("{}/fixtures/specs/{name}.toml", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    fn run(text: &str, spec: Option<&DslSpec>) -> Vec<(String, Label)> {
        let ctx = NerContext { labels: LABELS, spec, lexicon: &[] };
        rule_entities(text, &ctx).into_iter().map(|e| (e.surface, e.label)).collect()
    }

    fn pairs(v: &[(&str, Label)]) -> Vec<(String, Label)> {
        v.iter().map(|(s, l)| (s.to_string(), *l)).collect()
    }

    #[test]
    fn dissolve_example() {
        let chem = spec("chemistry");
        let got = run("Dissolve 10 g of sodium chloride in 100 mL of distilled water at 80°C", Some(&chem));
        assert_eq!(
            got,
            pairs(&[
                ("10 g", Label::Mass),
                ("sodium chloride", Label::Reagent),
                ("100 mL", Label::Volume),
                ("distilled water", Label::Reagent),
                ("80°C", Label::Temperature),
            ])
        );
        // the chunker alone finds the same reagents without a vocabulary
        let bare = run("Dissolve 10 g of sodium chloride in 100 mL of distilled water at 80°C", None);
        assert_eq!(bare, got);
    }

    #[test]
    fn wine_and_empty() {
        assert_eq!(run("1/3 cup red wine", None), pairs(&[("1/3 cup", Label::Volume), ("red wine", Label::Reagent)]));
        assert!(run("Stir.", None).is_empty());
    }

    #[test]
    fn markup_and_aliases() {
        let cooking = spec("cooking");
        let got = run("Add the @oil@ to a large saucepan, heat to <300 F>, and saute the @onions@.", Some(&cooking));
        assert_eq!(
            got,
            pairs(&[
                ("oil", Label::Reagent),
                ("large saucepan", Label::Container),
                ("300 F", Label::Temperature),
                ("onions", Label::Reagent),
            ])
        );
        let got = run("Keep on medium to high heat, and don't stir.", Some(&cooking));
        assert_eq!(got, pairs(&[("medium to high heat", Label::Temperature)]));
        let got = run("Remove liquified fat when done.", Some(&cooking));
        assert_eq!(got, pairs(&[("liquified fat", Label::Reagent)]));
        let got = run("Slowly add the @wine@ as well, to not lower the temperature.", Some(&cooking));
        assert_eq!(got, pairs(&[("Slowly", Label::Speed), ("wine", Label::Reagent)]));
    }

    #[test]
    fn counts_and_lists() {
        let chem = spec("chemistry");
        let got = run("Split the mixture equally into 2 flasks.", Some(&chem));
        assert_eq!(got, pairs(&[("mixture", Label::Reagent), ("2", Label::Count), ("flasks", Label::Container)]));
        let got = run("Add salt, black pepper and thyme.", None);
        assert_eq!(got, pairs(&[("salt", Label::Reagent), ("black pepper", Label::Reagent), ("thyme", Label::Reagent)]));
    }

    #[test]
    fn output_and_missing_rules() {
        let out = rule_output(r#"{"action": "add", "reagent": ["glycoblue"]}"#, &["RNA".into(), "mRNA".into()]);
        assert_eq!(out.as_deref(), Some("RNA"));
        let out = rule_output("add 1:10 volume 5 M NaCl solution", &["a μMACS column".into(), "solution".into()]);
        assert_eq!(out.as_deref(), Some("solution"));
        let miss = rule_missing(&["glycoblue".into()], &["RNA".into(), "glycoblue".into()], 1);
        assert_eq!(miss, ["RNA"]);
        assert!(rule_missing(&[], &[], 2).is_empty());
    }
}
