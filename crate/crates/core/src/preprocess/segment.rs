//! Protocol text segmentation and front matter.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::program::Product;
use crate::units::{parse_quantity, Quantity};

/// One protocol step with its byte span in the raw text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub text: String,
    pub span: (usize, usize),
    /// Stripped list marker such as `3.` or `Step 2:`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ingredient {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantity: Option<Quantity>,
    pub line: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product: Option<Product>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ingredients: Vec<Ingredient>,
}

/// The raw protocol and, once segmented, its steps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProtocolText {
    pub raw: String,
    pub steps: Vec<Step>,
    pub metadata: Metadata,
}

impl ProtocolText {
    pub fn new(raw: impl Into<String>) -> Self {
        ProtocolText { raw: raw.into(), ..Default::default() }
    }
}

fn header_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[ \t]*(instructions|method|procedure|directions|steps)[ \t]*:?[ \t]*$").unwrap())
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?i:step\s+\d+\s*[:.)]?|\d+\s*[.)]|[-*•])\s+").unwrap())
}

/// Split the protocol body into steps and read any front matter.
///
/// A body with several blank-line separated paragraphs (or several numbered
/// items) yields one step per paragraph; a single paragraph is split into
/// sentences.
pub fn segment_protocol(mut text: ProtocolText) -> ProtocolText {
    text.steps.clear();
    let raw = text.raw.as_str();
    let (body_start, front) = match header_regex().find(raw) {
        Some(m) => (m.end(), Some(&raw[..m.start()])),
        None => (0, None),
    };
    text.metadata = front.map(parse_front_matter).unwrap_or_default();

    let blocks = split_blocks(raw, body_start);
    let mut steps = Vec::new();
    if blocks.len() >= 2 {
        for (s, e) in blocks {
            push_step(raw, s, e, &mut steps);
        }
    } else if let Some(&(s, e)) = blocks.first() {
        let (s, marker) = strip_marker(raw, s, e);
        let mut first = true;
        for (a, b) in split_sentences(raw, s, e) {
            let mut step = make_step(raw, a, b);
            if first {
                step.marker = marker.clone();
                first = false;
            }
            if !step.text.is_empty() {
                steps.push(step);
            }
        }
    }
    text.steps = steps;
    text
}

fn push_step(raw: &str, s: usize, e: usize, out: &mut Vec<Step>) {
    let (s, marker) = strip_marker(raw, s, e);
    let mut step = make_step(raw, s, e);
    step.marker = marker;
    if !step.text.is_empty() {
        out.push(step);
    }
}

fn make_step(raw: &str, s: usize, e: usize) -> Step {
    let slice = &raw[s..e];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    let (a, b) = (s + lead, e - trail);
    let (a, b) = if a > b { (a, a) } else { (a, b) };
    Step { text: raw[a..b].to_string(), span: (a, b), marker: None }
}

fn strip_marker(raw: &str, s: usize, e: usize) -> (usize, Option<String>) {
    let slice = &raw[s..e];
    let lead = slice.len() - slice.trim_start().len();
    let rest = &slice[lead..];
    match marker_regex().find(rest) {
        Some(m) => (s + lead + m.end(), Some(m.as_str().trim().to_string())),
        None => (s, None),
    }
}

/// Paragraphs of the body, further split at numbered-list lines.
fn split_blocks(raw: &str, from: usize) -> Vec<(usize, usize)> {
    let mut blocks = Vec::new();
    let mut cur: Option<(usize, usize)> = None;
    let mut pos = from;
    for line in raw[from..].split_inclusive('\n') {
        let start = pos;
        pos += line.len();
        let content = line.trim();
        if content.is_empty() {
            if let Some(b) = cur.take() {
                blocks.push(b);
            }
            continue;
        }
        let numbered = marker_regex().is_match(line.trim_start()) && !content.starts_with('-') && !content.starts_with('*');
        match cur {
            Some(b) if !numbered => cur = Some((b.0, pos)),
            Some(b) => {
                blocks.push(b);
                cur = Some((start, pos));
            }
            None => cur = Some((start, pos)),
        }
    }
    if let Some(b) = cur {
        blocks.push(b);
    }
    blocks
}

const ABBREVIATIONS: &[&str] = &["e.g", "i.e", "approx", "ca", "vs", "fig", "min", "no", "etc", "resp"];

/// Sentence spans inside `raw[s..e]`.
fn split_sentences(raw: &str, s: usize, e: usize) -> Vec<(usize, usize)> {
    let bytes = raw.as_bytes();
    let mut out = Vec::new();
    let mut start = s;
    let mut i = s;
    while i < e {
        let c = bytes[i];
        if matches!(c, b'.' | b'!' | b'?') {
            let next = bytes.get(i + 1).copied();
            let at_break = next.is_none_or(|n| n.is_ascii_whitespace()) || i + 1 >= e;
            let prev_digit = i > s && bytes[i - 1].is_ascii_digit();
            let next_digit = next.is_some_and(|n| n.is_ascii_digit());
            let word_before = raw[start..i].rsplit(|ch: char| ch.is_whitespace()).next().unwrap_or("").to_lowercase();
            let abbreviation = c == b'.' && ABBREVIATIONS.contains(&word_before.trim_start_matches('('));
            if at_break && !(prev_digit && next_digit) && !abbreviation {
                out.push((start, i + 1));
                start = i + 1;
            }
        }
        i += 1;
    }
    if !raw[start..e].trim().is_empty() {
        out.push((start, e));
    }
    out
}

fn ingredient_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([^}]+)\}").unwrap())
}

fn parse_front_matter(front: &str) -> Metadata {
    let mut meta = Metadata::default();
    let mut in_ingredients = false;
    for line in front.lines() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let lower = t.to_lowercase();
        let keyed = t.split_once(':').filter(|(k, _)| matches!(k.trim().to_lowercase().as_str(), "yield" | "yields" | "serves"));
        if let Some((_, value)) = keyed {
            let value = value.trim();
            meta.product = Some(match parse_quantity(value) {
                Some(q) if q.unit.is_some() => Product::Servings(q),
                _ => Product::Reagent(value.to_string()),
            });
            in_ingredients = false;
            continue;
        }
        if lower.starts_with("ingredients") || lower.starts_with("materials") || lower.starts_with("reagents") {
            in_ingredients = true;
            continue;
        }
        if in_ingredients && (t.starts_with('-') || t.starts_with('*') || t.starts_with('•')) {
            meta.ingredients.push(parse_ingredient(t.trim_start_matches(['-', '*', '•']).trim()));
            continue;
        }
        if meta.title.is_none() && !t.contains(':') {
            meta.title = Some(t.to_string());
        }
    }
    meta
}

fn parse_ingredient(line: &str) -> Ingredient {
    let plain = line.replace(['[', ']'], "");
    let quantity = crate::units::find_quantities(&plain).into_iter().next().filter(|m| m.start <= 2).map(|m| m.quantity);
    let name = match ingredient_regex().captures(line) {
        Some(c) => c[1].trim().to_string(),
        None => {
            let head = plain.split(';').next().unwrap_or(&plain);
            let after = crate::units::find_quantities(head).into_iter().next().map_or(head, |m| &head[m.end..]);
            after.trim().to_string()
        }
    };
    Ingredient { name, quantity, line: line.to_string() }
}
