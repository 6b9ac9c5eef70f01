//! Closed word classes and the tokenizer shared by action and entity
//! extraction.

use std::sync::OnceLock;

use regex::Regex;

pub const DETERMINERS: &[&str] =
    &["the", "a", "an", "some", "each", "all", "this", "that", "these", "those", "its", "their", "your", "any", "both", "another"];

/// Prepositions after which a noun phrase names a reagent.
pub const REAGENT_PREPS: &[&str] = &["of", "with"];

/// Prepositions after which a noun phrase names a place.
pub const PLACE_PREPS: &[&str] = &["to", "into", "onto", "in", "inside", "within", "on", "over"];

pub const CONNECTORS: &[&str] =
    &["and", "then", "also", "next", "finally", "first", "now", "afterwards", "subsequently", "meanwhile", "so", "or", "but"];

pub const ADVERBS: &[&str] = &[
    "slowly",
    "gently",
    "carefully",
    "quickly",
    "immediately",
    "briefly",
    "thoroughly",
    "vigorously",
    "well",
    "more",
    "again",
    "constantly",
    "occasionally",
    "continuously",
    "further",
    "additionally",
    "gradually",
    "rapidly",
    "completely",
    "lightly",
    "evenly",
    "dropwise",
    "still",
    "just",
    "always",
];

pub const NEGATIONS: &[&str] = &["don't", "dont", "do", "not", "never", "without", "avoid", "no"];

pub const SUBORDINATORS: &[&str] = &["after", "once", "when", "if", "until", "while", "before", "unless", "whenever", "as"];

/// Words that end a noun phrase and never start one.
pub const BREAK_WORDS: &[&str] = &[
    "at",
    "for",
    "from",
    "by",
    "until",
    "per",
    "as",
    "about",
    "than",
    "under",
    "above",
    "below",
    "through",
    "via",
    "is",
    "are",
    "be",
    "been",
    "was",
    "were",
    "has",
    "have",
    "had",
    "done",
    "ready",
    "used",
    "using",
    "it",
    "them",
    "they",
    "which",
    "who",
    "where",
    "when",
    "once",
    "if",
    "while",
    "before",
    "after",
    "unless",
    "not",
    "don't",
    "dont",
    "never",
    "do",
    "does",
    "will",
    "should",
    "must",
    "can",
    "may",
    "let",
    "up",
    "down",
    "off",
    "out",
    "away",
    "back",
    "here",
    "there",
    "approximately",
    "about",
    "around",
    "roughly",
    "least",
    "most",
    "separately",
    "together",
    "same",
];

/// Nouns that describe settings rather than reagents.
pub const STOP_NOUNS: &[&str] = &[
    "temperature",
    "heat",
    "time",
    "way",
    "step",
    "steps",
    "endpoint",
    "volume",
    "amount",
    "speed",
    "rate",
    "minute",
    "minutes",
    "hour",
    "hours",
    "second",
    "seconds",
    "end",
    "rest",
    "top",
    "bottom",
    "side",
    "sides",
    "lid",
    "mark",
];

/// Imperative verbs that may lack a matching operation.
pub const COMMON_VERBS: &[&str] = &[
    "add",
    "heat",
    "stir",
    "mix",
    "pour",
    "boil",
    "simmer",
    "fry",
    "saute",
    "sauté",
    "bake",
    "roast",
    "cool",
    "chill",
    "wait",
    "record",
    "measure",
    "weigh",
    "titrate",
    "filter",
    "wash",
    "rinse",
    "dry",
    "cut",
    "chop",
    "slice",
    "dice",
    "mince",
    "season",
    "serve",
    "place",
    "put",
    "transfer",
    "centrifuge",
    "spin",
    "incubate",
    "shake",
    "swirl",
    "dissolve",
    "dilute",
    "prepare",
    "remove",
    "drain",
    "discard",
    "decant",
    "split",
    "divide",
    "combine",
    "blend",
    "whisk",
    "cover",
    "uncover",
    "leave",
    "keep",
    "set",
    "let",
    "allow",
    "repeat",
    "use",
    "take",
    "turn",
    "bring",
    "reduce",
    "lower",
    "raise",
    "evaporate",
    "concentrate",
    "extract",
    "collect",
    "label",
    "store",
    "freeze",
    "thaw",
    "vortex",
    "pipette",
    "aspirate",
    "resuspend",
    "pellet",
    "sonicate",
    "autoclave",
    "sterilize",
    "inoculate",
    "plate",
    "streak",
    "grow",
    "harvest",
    "lyse",
    "elute",
    "load",
    "run",
    "stain",
    "image",
    "observe",
    "check",
    "verify",
    "adjust",
    "warm",
    "reflux",
    "quench",
    "neutralize",
    "acidify",
    "precipitate",
    "crystallize",
    "recrystallize",
    "distill",
    "purify",
    "grind",
    "stop",
    "start",
    "continue",
    "transfer",
    "dispense",
    "charge",
    "introduce",
    "sweat",
    "brown",
    "stew",
    "skim",
];

pub fn is_in(list: &[&str], word: &str) -> bool {
    list.contains(&word)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    Number,
    Punct,
}

/// A token with a byte span relative to the tokenized string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub lower: String,
    pub start: usize,
    pub end: usize,
    pub kind: TokenKind,
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?P<w>[\p{L}][\p{L}'’\-]*)|(?P<n>\d+(?:[.,/]\d+)?)|(?P<p>[^\s\p{L}\d])").unwrap())
}

pub fn tokenize(text: &str) -> Vec<Token> {
    token_regex()
        .captures_iter(text)
        .map(|c| {
            let (m, kind) = if let Some(m) = c.name("w") {
                (m, TokenKind::Word)
            } else if let Some(m) = c.name("n") {
                (m, TokenKind::Number)
            } else {
                (c.name("p").unwrap(), TokenKind::Punct)
            };
            let text = m.as_str().trim_end_matches(['-', '\'']).to_string();
            let end = m.start() + text.len();
            Token { lower: text.to_lowercase().replace('’', "'"), text, start: m.start(), end, kind }
        })
        .filter(|t| !t.text.is_empty())
        .collect()
}

/// Lower-cased content words, for edit-distance comparisons.
pub fn content_words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.kind != TokenKind::Punct)
        .map(|t| t.lower)
        .filter(|w| !is_in(DETERMINERS, w) && !is_in(CONNECTORS, w))
        .collect()
}

/// Find `needle` in `hay` at word boundaries, ignoring ASCII case.
pub fn find_phrase(hay: &str, needle: &str) -> Vec<(usize, usize)> {
    let needle = needle.to_ascii_lowercase();
    if needle.is_empty() {
        return Vec::new();
    }
    let folded = hay.to_ascii_lowercase();
    let is_word = |c: char| c.is_alphanumeric();
    folded
        .match_indices(needle.as_str())
        .map(|(i, m)| (i, i + m.len()))
        .filter(|&(s, e)| {
            let before = folded[..s].chars().next_back();
            let after = folded[e..].chars().next();
            !before.is_some_and(is_word) && !after.is_some_and(is_word)
        })
        .collect()
}
