//! Clause splitting, imperative-verb detection and operation matching.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::entities::{Entity, Label, Svo};
use super::lexicon::{find_phrase, is_in, tokenize, Token, TokenKind, ADVERBS, CONNECTORS, DETERMINERS, PLACE_PREPS};
use super::similarity::{Similarity, TrigramCosine};
use crate::dsl::DslSpec;
use crate::dsl::HookKind;
use crate::extractor::rule::{rule_entities, verb_set};
use crate::extractor::NerContext;
use crate::preprocess::entities::LABELS;

/// Blend of exact and semantic scores when ranking operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub w_exact: f64,
    pub w_sem: f64,
    /// Candidates scoring below this are dropped.
    pub floor: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { w_exact: 0.7, w_sem: 0.3, floor: 0.35 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCandidate {
    pub operation: String,
    pub score: f64,
}

fn fold(s: &str) -> String {
    s.trim()
        .to_lowercase()
        .chars()
        .map(|c| match c {
            'é' | 'è' | 'ê' => 'e',
            'á' | 'à' | 'â' => 'a',
            'ó' | 'ô' => 'o',
            c => c,
        })
        .collect()
}

/// The word and a few naive de-inflections of it.
fn stems(w: &str) -> Vec<String> {
    let mut out = vec![w.to_string()];
    let mut push = |s: String| {
        if s.len() >= 2 && !out.contains(&s) {
            out.push(s);
        }
    };
    for (suffix, repl) in [
        ("ies", "y"),
        ("es", ""),
        ("s", ""),
        ("ing", ""),
        ("ing", "e"),
        ("ed", ""),
        ("ed", "e"),
        ("d", ""),
        ("ation", "ate"),
        ("ation", "e"),
        ("ation", ""),
        ("ion", "e"),
        ("ion", ""),
    ] {
        if let Some(stem) = w.strip_suffix(suffix) {
            push(format!("{stem}{repl}"));
        }
    }
    // doubled consonant: "stirring" -> "stir"
    for suffix in ["ing", "ed"] {
        if let Some(stem) = w.strip_suffix(suffix) {
            let b = stem.as_bytes();
            if b.len() >= 2 && b[b.len() - 1] == b[b.len() - 2] {
                push(stem[..stem.len() - 1].to_string());
            }
        }
    }
    out
}

fn exact(action: &str, names: &[String]) -> bool {
    let a = fold(action);
    let forms = if a.contains(' ') { vec![a.clone()] } else { stems(&a) };
    names.iter().any(|n| {
        let n = fold(n);
        forms.contains(&n)
    })
}

/// Rank operations for `action` with the default weights and trigram similarity.
pub fn match_operation(action: &str, spec: &DslSpec) -> Vec<OpCandidate> {
    match_operation_with(action, spec, &MatchConfig::default(), &TrigramCosine)
}

pub fn match_operation_with(action: &str, spec: &DslSpec, cfg: &MatchConfig, sim: &dyn Similarity) -> Vec<OpCandidate> {
    let mut out: Vec<OpCandidate> = spec
        .operations()
        .map(|op| {
            let mut names = vec![op.name.clone()];
            names.extend(op.synonyms.iter().cloned());
            let e = if exact(action, &names) { 1.0 } else { 0.0 };
            let score = cfg.w_exact * e + cfg.w_sem * sim.similarity(&fold(action), &op.name);
            OpCandidate { operation: op.name.clone(), score: score.clamp(0.0, 1.0) }
        })
        .filter(|c| c.score >= cfg.floor)
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.operation.cmp(&b.operation)));
    out
}

/// A subordinate clause attached to an action ("after 2 minutes", "until dissolved").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub keyword: String,
    /// Clause text after the keyword.
    pub text: String,
    pub span: (usize, usize),
    pub entities: Vec<Entity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Operation,
    /// An action hook such as `drain` that folds into a neighbour's condition.
    Hook,
    Loop,
    /// A verb with no matching operation, or a step with no verb.
    Placeholder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HookUse {
    pub name: String,
    pub when_done: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repeat {
    pub operation: Option<String>,
    pub count: Option<u32>,
    /// One-based inclusive step range, e.g. "steps 2-3".
    pub steps: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verb {
    pub text: String,
    pub span: (usize, usize),
}

/// One action of a step with its candidates and entities. Spans are raw-text offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionUnit {
    pub step: usize,
    pub span: (usize, usize),
    pub text: String,
    pub kind: UnitKind,
    pub verb: Option<Verb>,
    pub candidates: Vec<OpCandidate>,
    pub entities: Vec<Entity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leading: Option<Clause>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trailing: Vec<Clause>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hook: Option<HookUse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat: Option<Repeat>,
}

impl ActionUnit {
    pub fn operation(&self) -> Option<&str> {
        self.candidates.first().map(|c| c.operation.as_str())
    }

    pub fn placeholder(step: usize, span: (usize, usize), text: &str) -> Self {
        ActionUnit {
            step,
            span,
            text: text.to_string(),
            kind: UnitKind::Placeholder,
            verb: None,
            candidates: Vec::new(),
            entities: Vec::new(),
            leading: None,
            trailing: Vec::new(),
            hook: None,
            repeat: None,
        }
    }
}

/// A verb found by [`extract_actions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMatch {
    pub verb: Verb,
    pub candidates: Vec<OpCandidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionError {
    #[error("no action found in {0:?}")]
    NoActionFound(String),
}

/// Imperative verbs of one step with ranked operations, in text order.
pub fn extract_actions(step: &str, spec: &DslSpec) -> Result<Vec<ActionMatch>, ActionError> {
    let ctx = NerContext { labels: LABELS, spec: Some(spec), lexicon: &[] };
    let entities = rule_entities(step, &ctx);
    let found: Vec<ActionMatch> = analyze_step(step, 0, 0, &entities, spec, &MatchConfig::default())
        .into_iter()
        .filter(|u| u.kind == UnitKind::Operation)
        .filter_map(|u| Some(ActionMatch { verb: u.verb?, candidates: u.candidates }))
        .collect();
    if found.is_empty() {
        Err(ActionError::NoActionFound(step.to_string()))
    } else {
        Ok(found)
    }
}

const SUBORDINATE: &[&str] = &["after", "once", "when", "if", "while", "before", "unless", "whenever", "until", "as"];
const TRAILING: &[&str] = &["until", "when", "while", "unless", "as"];
const CAUSATIVE: &[&str] = &["let", "allow", "leave"];
const COPULAS: &[&str] = &["is", "are", "be", "was", "were", "been", "being", "to", "has", "have", "had", "it", "they"];

fn is_negation(word: &str, next: Option<&str>) -> bool {
    match word {
        "don't" | "dont" | "not" | "never" | "no" => true,
        "do" => next == Some("not"),
        _ => false,
    }
}

fn count_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(\d+|one|two|three|four|five|six|seven|eight|nine|ten)\s+(?:more\s+)?times\b|\b(once|twice|thrice)\b").unwrap()
    })
}

fn steps_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bsteps?\s+(\d+)(?:\s*(?:-|–|to|and|through)\s*(\d+))?").unwrap())
}

fn small_number(w: &str) -> Option<u32> {
    let n = match w.to_lowercase().as_str() {
        "once" | "one" => 1,
        "twice" | "two" => 2,
        "thrice" | "three" => 3,
        "four" => 4,
        "five" => 5,
        "six" => 6,
        "seven" => 7,
        "eight" => 8,
        "nine" => 9,
        "ten" => 10,
        other => return other.parse().ok(),
    };
    Some(n)
}

fn parse_repeat(text: &str, spec: &DslSpec) -> Repeat {
    let count = count_regex().captures(text).and_then(|c| small_number(c.get(1).or_else(|| c.get(2))?.as_str()));
    let steps = steps_regex().captures(text).and_then(|c| {
        let a: usize = c[1].parse().ok()?;
        let b = c.get(2).and_then(|m| m.as_str().parse().ok()).unwrap_or(a);
        Some((a.min(b), a.max(b)))
    });
    let operation = tokenize(text)
        .iter()
        .skip(1)
        .filter(|t| t.kind == TokenKind::Word)
        .find_map(|t| match_operation(&t.lower, spec).into_iter().next())
        .map(|c| c.operation);
    Repeat { operation, count, steps }
}

/// Phrase at the start of `rest` matching a multiword synonym or hook verb.
fn multiword_action(rest: &str, spec: &DslSpec) -> Option<String> {
    let mut phrases: Vec<&String> = spec.operations().flat_map(|o| o.synonyms.iter()).collect();
    phrases.extend(spec.semantics.control.hooks.values().flat_map(|h| h.verbs.iter()));
    phrases.retain(|p| p.contains(' '));
    phrases.sort_by_key(|p| std::cmp::Reverse(p.len()));
    phrases.into_iter().find(|p| find_phrase(rest, p).first().is_some_and(|&(s, _)| s == 0)).cloned()
}

fn hook_for_verb(verb: &str, spec: &DslSpec) -> Option<String> {
    spec.semantics
        .control
        .hooks
        .iter()
        .filter(|(_, h)| h.kind == HookKind::Action)
        .find(|(_, h)| h.verbs.iter().any(|v| fold(v) == fold(verb)))
        .map(|(name, _)| name.clone())
}

fn svo_for(entity: &Entity, tokens: &[Token]) -> Svo {
    if entity.label.is_quantity() || entity.label == Label::Speed {
        return Svo::Setting;
    }
    let prev = tokens
        .iter()
        .rev()
        .filter(|t| t.end <= entity.span.0 && t.kind == TokenKind::Word)
        .find(|t| !is_in(DETERMINERS, &t.lower) && !is_in(ADVERBS, &t.lower));
    match prev {
        Some(t) if is_in(PLACE_PREPS, &t.lower) => Svo::Place,
        _ => Svo::Object,
    }
}

struct Analyzer<'a> {
    text: &'a str,
    offset: usize,
    step: usize,
    tokens: Vec<Token>,
    entities: &'a [Entity],
    spec: &'a DslSpec,
    cfg: &'a MatchConfig,
    verbs: BTreeSet<String>,
    units: Vec<ActionUnit>,
    pending_leading: Option<Clause>,
    pending_entities: Vec<Entity>,
}

impl<'a> Analyzer<'a> {
    fn in_entity(&self, t: &Token) -> bool {
        self.entities.iter().any(|e| t.start >= e.span.0 && t.end <= e.span.1)
    }

    /// Outside entities, or inside a pace proxy such as "slowly".
    fn skippable(&self, t: &Token) -> bool {
        self.entities.iter().find(|e| t.start >= e.span.0 && t.end <= e.span.1).is_none_or(|e| e.label == Label::Speed)
    }

    fn shifted(&self, span: (usize, usize)) -> (usize, usize) {
        (span.0 + self.offset, span.1 + self.offset)
    }

    /// Entities inside a relative span, svo-tagged and shifted to raw offsets.
    fn entities_in(&self, span: (usize, usize)) -> Vec<Entity> {
        self.entities
            .iter()
            .filter(|e| e.span.0 >= span.0 && e.span.1 <= span.1)
            .map(|e| {
                let mut e = e.clone();
                e.svo = Some(svo_for(&e, &self.tokens));
                e.span = self.shifted(e.span);
                e
            })
            .collect()
    }

    fn split(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if self.in_entity(t) {
                continue;
            }
            let hard = match t.kind {
                TokenKind::Punct => ".!?;:,()".contains(t.text.as_str()),
                TokenKind::Word => matches!(t.lower.as_str(), "and" | "then" | "but"),
                TokenKind::Number => false,
            };
            if hard {
                out.push((start, i));
                start = i + 1;
            } else if t.kind == TokenKind::Word && is_in(TRAILING, &t.lower) && t.lower != "as" {
                out.push((start, i));
                start = i;
            }
        }
        out.push((start, self.tokens.len()));
        out.retain(|(a, b)| a < b);
        out
    }

    fn clause_span(&self, from: usize, to: usize) -> (usize, usize) {
        (self.tokens[from].start, self.tokens[to - 1].end)
    }

    fn run(mut self) -> Vec<ActionUnit> {
        for (a, b) in self.split() {
            self.clause(a, b);
        }
        let leftovers = std::mem::take(&mut self.pending_entities);
        let leading = self.pending_leading.take();
        if let Some(last) = self.units.last_mut() {
            last.entities.extend(leftovers);
            last.trailing.extend(leading);
        }
        for u in &mut self.units {
            u.entities.sort_by_key(|e| e.span);
            if let Some(h) = &mut u.hook {
                h.when_done = u.trailing.iter().any(|c| {
                    c.keyword == "when" && ["done", "finished", "ready", "cooked"].iter().any(|w| c.text.to_lowercase().starts_with(w))
                });
            }
        }
        self.units
    }

    fn clause(&mut self, a: usize, b: usize) {
        // indices into tokens of the words of this clause
        let idx: Vec<usize> = (a..b).filter(|&i| self.tokens[i].kind != TokenKind::Punct).collect();
        if idx.is_empty() {
            return;
        }
        let words: Vec<String> = idx.iter().map(|&i| self.tokens[i].lower.clone()).collect();
        let word = |k: usize| words[k].as_str();
        let mut k = 0;
        while k < idx.len() && (is_in(CONNECTORS, word(k)) || is_in(ADVERBS, word(k))) && self.skippable(&self.tokens[idx[k]]) {
            k += 1;
        }
        if k == idx.len() {
            self.merge(a, b);
            return;
        }

        let mut action_from = k;
        let mut from_tok = a;
        if is_in(SUBORDINATE, word(k)) {
            let keyword = word(k).to_string();
            let embedded = (k + 2..idx.len()).find(|&j| {
                let t = &self.tokens[idx[j]];
                t.kind == TokenKind::Word && self.verbs.contains(&t.lower) && !self.in_entity(t) && !is_in(COPULAS, word(j - 1))
            });
            let sub_end = embedded.map_or(b, |j| idx[j]);
            let body_from = idx.get(k + 1).copied().filter(|&i| i < sub_end);
            let span = self.clause_span(idx[k], sub_end);
            let body_span = body_from.map_or((span.1, span.1), |i| (self.tokens[i].start, span.1));
            let clause = Clause {
                keyword: keyword.clone(),
                text: self.text[body_span.0..body_span.1].to_string(),
                span: self.shifted(span),
                entities: self.entities_in(span),
            };
            match embedded {
                Some(j) => {
                    self.set_leading(clause);
                    action_from = j;
                    from_tok = idx[j];
                }
                None => {
                    let trailing = is_in(TRAILING, &keyword) && self.pending_leading.is_none();
                    match self.units.last_mut() {
                        Some(last) if trailing => last.trailing.push(clause),
                        _ => self.set_leading(clause),
                    }
                    return;
                }
            }
        }

        let mut p = action_from;
        let mut negated = false;
        while p < idx.len() && !self.in_entity(&self.tokens[idx[p]]) {
            let w = word(p);
            if is_negation(w, (p + 1 < idx.len()).then(|| word(p + 1))) {
                negated = true;
            } else if !(w == "to" || w == "do" || is_in(ADVERBS, w) || is_in(CONNECTORS, w)) {
                break;
            }
            p += 1;
        }
        if negated {
            return;
        }
        if p == idx.len() {
            self.merge(idx[action_from], b);
            return;
        }

        if is_in(CAUSATIVE, word(p)) {
            match (p + 1..idx.len()).find(|&q| self.verbs.contains(word(q)) && !self.in_entity(&self.tokens[idx[q]])) {
                Some(q) => p = q,
                None => {
                    self.merge(from_tok, b);
                    return;
                }
            }
        }
        let vt = &self.tokens[idx[p]];
        if vt.kind != TokenKind::Word || self.in_entity(vt) {
            self.merge(from_tok, b);
            return;
        }
        let rest = &self.text[vt.start..self.tokens[b - 1].end];
        let action = multiword_action(rest, self.spec).unwrap_or_else(|| vt.lower.clone());
        let verb_span = (vt.start, vt.start + action.len().min(rest.len()));
        let candidates = match_operation_with(&action, self.spec, self.cfg, &TrigramCosine);
        let has_exact = candidates.first().is_some_and(|c| c.score >= self.cfg.w_exact);
        let hook = hook_for_verb(&action, self.spec).filter(|_| !has_exact);

        let kind = if word(p) == "repeat" {
            UnitKind::Loop
        } else if hook.is_some() {
            UnitKind::Hook
        } else if !candidates.is_empty() {
            UnitKind::Operation
        } else if self.verbs.contains(word(p)) {
            UnitKind::Placeholder
        } else {
            self.merge(from_tok, b);
            return;
        };

        let span = self.clause_span(from_tok, b);
        let mut entities = std::mem::take(&mut self.pending_entities);
        entities.extend(self.entities_in(span));
        let unit_span = self.shifted(span);
        self.units.push(ActionUnit {
            step: self.step,
            span: unit_span,
            text: self.text[span.0..span.1].to_string(),
            kind,
            verb: Some(Verb { text: self.text[verb_span.0..verb_span.1].to_string(), span: self.shifted(verb_span) }),
            candidates: if kind == UnitKind::Operation { candidates } else { Vec::new() },
            entities,
            leading: self.pending_leading.take(),
            trailing: Vec::new(),
            hook: hook.map(|name| HookUse { name, when_done: false }),
            repeat: (kind == UnitKind::Loop).then(|| parse_repeat(&self.text[span.0..span.1], self.spec)),
        });
    }

    fn set_leading(&mut self, clause: Clause) {
        match &mut self.pending_leading {
            None => self.pending_leading = Some(clause),
            Some(_) => self.pending_entities.extend(clause.entities),
        }
    }

    /// A clause without its own verb: its entities belong to the previous action.
    fn merge(&mut self, from: usize, to: usize) {
        let span = self.clause_span(from, to);
        let ents = self.entities_in(span);
        let raw = self.shifted(span);
        let text = self.text;
        let offset = self.offset;
        match self.units.last_mut() {
            Some(last) if self.pending_leading.is_none() => {
                last.entities.extend(ents);
                last.span = (last.span.0.min(raw.0), last.span.1.max(raw.1));
                last.text = text[last.span.0 - offset..last.span.1 - offset].to_string();
            }
            _ => self.pending_entities.extend(ents),
        }
    }
}

/// Split one step into action units. `entities` carry spans relative to `text`;
/// output spans are shifted by `offset`.
pub fn analyze_step(text: &str, offset: usize, step: usize, entities: &[Entity], spec: &DslSpec, cfg: &MatchConfig) -> Vec<ActionUnit> {
    Analyzer {
        text,
        offset,
        step,
        tokens: tokenize(text),
        entities,
        spec,
        cfg,
        verbs: verb_set(Some(spec)),
        units: Vec::new(),
        pending_leading: None,
        pending_entities: Vec::new(),
    }
    .run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::load_dsl_spec;

    fn spec(name: &str) -> DslSpec {
        load_dsl_spec(format!("{}/fixtures/specs/{name}.toml", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    fn units(text: &str, spec: &DslSpec) -> Vec<ActionUnit> {
        let ctx = NerContext { labels: LABELS, spec: Some(spec), lexicon: &[] };
        analyze_step(text, 0, 0, &rule_entities(text, &ctx), spec, &MatchConfig::default())
    }

    fn summary(us: &[ActionUnit]) -> Vec<(UnitKind, String)> {
        us.iter()
            .map(|u| {
                let name = u.operation().map(str::to_string).or(u.hook.as_ref().map(|h| h.name.clone())).unwrap_or_default();
                (u.kind, name)
            })
            .collect()
    }

    #[test]
    fn exact_and_synonym_matches() {
        let chem = spec("chemistry");
        let add = match_operation("add", &chem);
        assert_eq!(add[0].operation, "add");
        assert!((add[0].score - 1.0).abs() < 1e-12);
        assert_eq!(match_operation("pour", &chem)[0].operation, "add");
        assert_eq!(match_operation("Stirring", &chem)[0].operation, "stir");
        let cooking = spec("cooking");
        assert_eq!(match_operation("saute", &cooking)[0].operation, "saute");
        assert_eq!(match_operation("sauté", &cooking)[0].operation, "saute");
        assert!(match_operation("xyzzy", &cooking).is_empty());
    }

    #[test]
    fn verbs_in_order() {
        let chem = spec("chemistry");
        let got = extract_actions("Stir the mixture at room temperature for 5 minutes.", &chem).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].verb.text, "Stir");
        let got = extract_actions("After 2 minutes, add the garlic.", &chem).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].verb.text, "add");
        assert!(matches!(extract_actions("The mixture is pretty.", &chem), Err(ActionError::NoActionFound(_))));
    }

    #[test]
    fn pasta_clauses() {
        let c = spec("cooking");
        let us = units("Add the @oil@ to a large saucepan, heat to <300 F>, and saute the @onions@.", &c);
        assert_eq!(
            summary(&us),
            [(UnitKind::Operation, "add".into()), (UnitKind::Operation, "heat".into()), (UnitKind::Operation, "saute".into())]
        );
        assert_eq!(us[0].entities[1].svo, Some(Svo::Place));

        let us = units("After |2 minutes|, add the @garlic@. Keep on medium to high heat, and don't stir.", &c);
        assert_eq!(summary(&us), [(UnitKind::Operation, "add".into()), (UnitKind::Operation, "heat".into())]);
        assert_eq!(us[0].leading.as_ref().unwrap().keyword, "after");
        assert_eq!(us[1].entities[0].surface, "medium to high heat");

        let us = units("Fry the @bacon@ in a separate pan, on high heat. Remove liquified fat when done.", &c);
        assert_eq!(summary(&us), [(UnitKind::Operation, "fry".into()), (UnitKind::Hook, "remove".into())]);
        assert_eq!(us[0].entities.len(), 3);
        assert!(us[1].hook.as_ref().unwrap().when_done);

        let us = units("Boil @pasta@ in a medium pan, until al dente (~|8 minutes|). Drain when done.", &c);
        assert_eq!(summary(&us), [(UnitKind::Operation, "boil".into()), (UnitKind::Hook, "drain".into())]);
        assert_eq!(us[0].trailing[0].keyword, "until");
        assert!(us[0].entities.iter().any(|e| e.surface == "8 minutes"));

        let us = units("Once the @beef@ is done, add the @carrots@, @sweet pepper@ and @tomato puree@.", &c);
        assert_eq!(summary(&us), [(UnitKind::Operation, "add".into())]);
        assert_eq!(us[0].leading.as_ref().unwrap().text, "the @beef@ is done");
        assert_eq!(us[0].entities.len(), 3);

        let us = units("Slowly add the @wine@ as well, to not lower the temperature. Let it simmer (but not boil) for |5-10 minutes|.", &c);
        assert_eq!(summary(&us), [(UnitKind::Operation, "add".into()), (UnitKind::Operation, "simmer".into())]);
        assert_eq!(us[0].entities.iter().map(|e| e.label).collect::<Vec<_>>(), [Label::Speed, Label::Reagent]);
        assert_eq!(us[1].entities.iter().map(|e| e.surface.as_str()).collect::<Vec<_>>(), ["it", "5-10 minutes"]);
    }

    #[test]
    fn repeat_units() {
        let chem = spec("chemistry");
        let us = units("Repeat steps 2-3 twice.", &chem);
        assert_eq!(us[0].kind, UnitKind::Loop);
        assert_eq!(us[0].repeat, Some(Repeat { operation: None, count: Some(2), steps: Some((2, 3)) }));
        let us = units("Repeat the stirring until the solid is dissolved.", &chem);
        assert_eq!(us[0].repeat.as_ref().unwrap().operation.as_deref(), Some("stir"));
        assert_eq!(us[0].trailing[0].keyword, "until");
    }

    #[test]
    fn placeholder_for_unknown_verb() {
        let chem = spec("chemistry");
        let us = units("Record the mass.", &chem);
        assert_eq!(us[0].kind, UnitKind::Placeholder);
    }
}
