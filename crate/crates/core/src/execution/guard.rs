//! Guard expressions for safety rules.
//!
//! ```text
//! guard   := or
//! or      := and ("or" and)*
//! and     := unary ("and" unary)*
//! unary   := "not" unary | "(" guard ")" | test
//! test    := "contents" ("has" | "lacks") ATTRIBUTE
//!          | OPERAND CMP QUANTITY
//! OPERAND := parameter name | "container.volume" | "context.temperature" | "context.elapsed"
//! CMP     := ">" | ">=" | "<" | "<=" | "==" | "!="
//! ```
//!
//! Comparisons against a ranged value hold when any point of the range
//! satisfies them, so `temperature > 22C` is true for `20-25C`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::units::{parse_quantity, Dimension, Magnitude, Quantity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
    Ne,
}

impl CmpOp {
    fn as_str(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    Param(String),
    ContainerVolume,
    Temperature,
    Elapsed,
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Param(p) => f.write_str(p),
            Operand::ContainerVolume => f.write_str("container.volume"),
            Operand::Temperature => f.write_str("context.temperature"),
            Operand::Elapsed => f.write_str("context.elapsed"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Guard {
    Has(String),
    Lacks(String),
    Cmp { lhs: Operand, op: CmpOp, rhs: Quantity },
    And(Box<Guard>, Box<Guard>),
    Or(Box<Guard>, Box<Guard>),
    Not(Box<Guard>),
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::Has(a) => write!(f, "contents has {a}"),
            Guard::Lacks(a) => write!(f, "contents lacks {a}"),
            Guard::Cmp { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.as_str()),
            Guard::And(a, b) => write!(f, "({a} and {b})"),
            Guard::Or(a, b) => write!(f, "({a} or {b})"),
            Guard::Not(a) => write!(f, "not {a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("guard `{guard}`: {reason}")]
pub struct GuardError {
    pub guard: String,
    pub reason: String,
}

/// What a guard can see at one step.
#[derive(Debug, Clone, Default)]
pub struct GuardScope<'a> {
    pub attributes: BTreeSet<&'a str>,
    /// Instruction parameters in base units.
    pub params: BTreeMap<String, Magnitude>,
    pub container_volume: Option<f64>,
    pub temperature: Option<f64>,
    pub elapsed: f64,
}

impl Guard {
    pub fn eval(&self, scope: &GuardScope<'_>) -> bool {
        match self {
            Guard::Has(a) => scope.attributes.contains(a.as_str()),
            Guard::Lacks(a) => !scope.attributes.contains(a.as_str()),
            Guard::Cmp { lhs, op, rhs } => {
                let value = match lhs {
                    Operand::Param(p) => scope.params.get(p).copied(),
                    Operand::ContainerVolume => scope.container_volume.map(Magnitude::Scalar),
                    Operand::Temperature => scope.temperature.map(Magnitude::Scalar),
                    Operand::Elapsed => Some(Magnitude::Scalar(scope.elapsed)),
                };
                let Some(v) = value else { return false };
                let r = rhs.to_base().midpoint();
                let (lo, hi) = (v.lo(), v.hi());
                match op {
                    CmpOp::Gt => hi > r,
                    CmpOp::Ge => hi >= r,
                    CmpOp::Lt => lo < r,
                    CmpOp::Le => lo <= r,
                    CmpOp::Eq => lo <= r && r <= hi,
                    CmpOp::Ne => !(lo == r && hi == r),
                }
            }
            Guard::And(a, b) => a.eval(scope) && b.eval(scope),
            Guard::Or(a, b) => a.eval(scope) || b.eval(scope),
            Guard::Not(a) => !a.eval(scope),
        }
    }

    /// Attribute names the guard tests.
    pub fn attributes(&self) -> BTreeSet<&str> {
        match self {
            Guard::Has(a) | Guard::Lacks(a) => BTreeSet::from([a.as_str()]),
            Guard::Cmp { .. } => BTreeSet::new(),
            Guard::And(a, b) | Guard::Or(a, b) => a.attributes().union(&b.attributes()).copied().collect(),
            Guard::Not(a) => a.attributes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Cmp(CmpOp),
    Open,
    Close,
}

fn tokenize(src: &str) -> Result<Vec<Tok>, String> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push(Tok::Open);
                i += 1;
            }
            ')' => {
                out.push(Tok::Close);
                i += 1;
            }
            '>' | '<' | '=' | '!' => {
                let two = chars.get(i + 1) == Some(&'=');
                let op = match (c, two) {
                    ('>', false) => CmpOp::Gt,
                    ('>', true) => CmpOp::Ge,
                    ('<', false) => CmpOp::Lt,
                    ('<', true) => CmpOp::Le,
                    ('=', true) => CmpOp::Eq,
                    ('!', true) => CmpOp::Ne,
                    _ => return Err(format!("stray `{c}`")),
                };
                out.push(Tok::Cmp(op));
                i += if two { 2 } else { 1 };
            }
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !"()<>=!".contains(chars[i]) {
                    i += 1;
                }
                out.push(Tok::Word(chars[start..i].iter().collect()));
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek_word(&self) -> Option<&str> {
        match self.toks.get(self.pos) {
            Some(Tok::Word(w)) => Some(w.as_str()),
            _ => None,
        }
    }

    fn or(&mut self) -> Result<Guard, String> {
        let mut g = self.and()?;
        while self.peek_word() == Some("or") {
            self.pos += 1;
            g = Guard::Or(Box::new(g), Box::new(self.and()?));
        }
        Ok(g)
    }

    fn and(&mut self) -> Result<Guard, String> {
        let mut g = self.unary()?;
        while self.peek_word() == Some("and") {
            self.pos += 1;
            g = Guard::And(Box::new(g), Box::new(self.unary()?));
        }
        Ok(g)
    }

    fn unary(&mut self) -> Result<Guard, String> {
        match self.toks.get(self.pos).cloned() {
            Some(Tok::Word(w)) if w == "not" => {
                self.pos += 1;
                Ok(Guard::Not(Box::new(self.unary()?)))
            }
            Some(Tok::Open) => {
                self.pos += 1;
                let g = self.or()?;
                if self.toks.get(self.pos) != Some(&Tok::Close) {
                    return Err("missing `)`".into());
                }
                self.pos += 1;
                Ok(g)
            }
            Some(Tok::Word(w)) if w == "contents" => {
                self.pos += 1;
                let verb = self.peek_word().map(str::to_string);
                self.pos += 1;
                let attr = self.peek_word().map(str::to_string).ok_or("expected an attribute name")?;
                self.pos += 1;
                match verb.as_deref() {
                    Some("has") => Ok(Guard::Has(attr)),
                    Some("lacks") => Ok(Guard::Lacks(attr)),
                    _ => Err("expected `has` or `lacks` after `contents`".into()),
                }
            }
            Some(Tok::Word(w)) => {
                self.pos += 1;
                let lhs = match w.as_str() {
                    "container.volume" => Operand::ContainerVolume,
                    "context.temperature" => Operand::Temperature,
                    "context.elapsed" => Operand::Elapsed,
                    p if p.contains('.') => return Err(format!("unknown operand `{p}`")),
                    p => Operand::Param(p.to_string()),
                };
                let Some(Tok::Cmp(op)) = self.toks.get(self.pos).cloned() else {
                    return Err(format!("expected a comparison after `{w}`"));
                };
                self.pos += 1;
                let mut words = Vec::new();
                while let Some(w) = self.peek_word() {
                    if matches!(w, "and" | "or") {
                        break;
                    }
                    words.push(w.to_string());
                    self.pos += 1;
                }
                let text = words.join(" ");
                let rhs = parse_quantity(&text).ok_or_else(|| format!("`{text}` is not a quantity"))?;
                if lhs == Operand::ContainerVolume && rhs.dimension() != Dimension::Volume {
                    return Err(format!("container.volume compared with `{text}`"));
                }
                Ok(Guard::Cmp { lhs, op, rhs })
            }
            Some(t) => Err(format!("unexpected {t:?}")),
            None => Err("unexpected end".into()),
        }
    }
}

pub fn parse_guard(src: &str) -> Result<Guard, GuardError> {
    let err = |reason: String| GuardError { guard: src.to_string(), reason };
    let toks = tokenize(src).map_err(err)?;
    let mut p = Parser { toks, pos: 0 };
    let g = p.or().map_err(err)?;
    if p.pos != p.toks.len() {
        return Err(err(format!("trailing input at token {}", p.pos)));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scope<'a>(attrs: &[&'a str], temp: Option<Magnitude>) -> GuardScope<'a> {
        let mut s = GuardScope { attributes: attrs.iter().copied().collect(), ..Default::default() };
        if let Some(t) = temp {
            s.params.insert("temperature".into(), t);
        }
        s
    }

    #[test]
    fn parses_and_evaluates() {
        let g = parse_guard("contents has heat-sensitive and temperature > 60 C").unwrap();
        assert!(g.eval(&scope(&["heat-sensitive"], Some(Magnitude::Scalar(70.0)))));
        assert!(!g.eval(&scope(&["heat-sensitive"], Some(Magnitude::Scalar(40.0)))));
        assert!(!g.eval(&scope(&["heat-stable"], Some(Magnitude::Scalar(70.0)))));
        assert!(!g.eval(&scope(&["heat-sensitive"], None)));
    }

    #[test]
    fn ranges_use_worst_endpoint() {
        let g = parse_guard("temperature > 22C").unwrap();
        assert!(g.eval(&scope(&[], Some(Magnitude::Range(20.0, 25.0)))));
        let g = parse_guard("temperature < 21C").unwrap();
        assert!(g.eval(&scope(&[], Some(Magnitude::Range(20.0, 25.0)))));
    }

    #[test]
    fn precedence_and_negation() {
        let g = parse_guard("not contents has a or contents has b and contents has c").unwrap();
        assert!(g.eval(&scope(&[], None)));
        assert!(!g.eval(&scope(&["a"], None)));
        assert!(g.eval(&scope(&["a", "b", "c"], None)));
        let g = parse_guard("(contents has a or contents has b) and context.elapsed >= 60 s").unwrap();
        assert_eq!(g.attributes(), BTreeSet::from(["a", "b"]));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_guard("temperature >").is_err());
        assert!(parse_guard("contents smells bad").is_err());
        assert!(parse_guard("(contents has a").is_err());
        assert!(parse_guard("context.pressure > 1").is_err());
    }
}
