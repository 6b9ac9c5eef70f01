//! DSL programs: instructions, slot values, control wrappers, and the
//! readable `op(slot = value, ...);` listing format.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::units::{parse_quantity, Quantity};

/// Reserved operation used for steps that could not be mapped to the DSL.
pub const NOOP: &str = "noop";

/// Canonical marker for a parameter value that could not be completed.
pub const MASK_TOKEN: &str = "<<<MASK>>>";

/// A slot value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Value {
    /// Quoted literal taken from the protocol text.
    Text(String),
    /// Reference to a reagent produced earlier (e.g. `mixture_1`) or to an
    /// allocated resource (e.g. `plate_1`).
    Symbol(String),
    Quantity(Quantity),
    List(Vec<Value>),
    Call(Call),
    /// Slot required by the pattern but not yet filled.
    Missing,
    /// Slot that completion could not fill; needs review.
    Mask,
}

impl Value {
    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    pub fn symbol(s: impl Into<String>) -> Self {
        Value::Symbol(s.into())
    }

    pub fn is_unresolved(&self) -> bool {
        matches!(self, Value::Missing | Value::Mask)
    }

    /// Items of a list value, or the value itself as a single item.
    pub fn items(&self) -> Vec<&Value> {
        match self {
            Value::List(items) => items.iter().collect(),
            v => vec![v],
        }
    }

    /// Number of items (lists count their elements).
    pub fn arity(&self) -> usize {
        match self {
            Value::List(items) => items.len(),
            _ => 1,
        }
    }

    /// Plain string form used for comparison and canonical records.
    pub fn plain(&self) -> String {
        match self {
            Value::Text(s) | Value::Symbol(s) => s.clone(),
            Value::Quantity(q) => q.to_string(),
            Value::List(items) => items.iter().map(Value::plain).collect::<Vec<_>>().join(", "),
            Value::Call(c) => c.to_string(),
            Value::Missing => String::new(),
            Value::Mask => MASK_TOKEN.to_string(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => write!(f, "\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"")),
            Value::Symbol(s) => f.write_str(s),
            Value::Quantity(q) => write!(f, "{q}"),
            Value::List(items) => {
                f.write_char('[')?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_char(']')
            }
            Value::Call(c) => write!(f, "{c}"),
            Value::Missing => f.write_char('?'),
            Value::Mask => f.write_str(MASK_TOKEN),
        }
    }
}

/// A control hook invocation such as `check_done(target = "beef")`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Call {
    pub name: String,
    #[serde(default)]
    pub args: Vec<Binding>,
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, b) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} = {}", b.slot, b.value)?;
        }
        f.write_char(')')
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub slot: String,
    pub value: Value,
}

impl Binding {
    pub fn new(slot: impl Into<String>, value: Value) -> Self {
        Binding { slot: slot.into(), value }
    }
}

/// Where an instruction came from in the protocol text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    /// Index of the protocol step.
    pub step: usize,
    /// Byte span of the action clause in the raw protocol text.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub op: String,
    pub bindings: Vec<Binding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

impl Instruction {
    pub fn new(op: impl Into<String>) -> Self {
        Instruction { op: op.into(), bindings: Vec::new(), origin: None }
    }

    pub fn with(mut self, slot: &str, value: Value) -> Self {
        self.set(slot, value);
        self
    }

    pub fn get(&self, slot: &str) -> Option<&Value> {
        self.bindings.iter().find(|b| b.slot == slot).map(|b| &b.value)
    }

    pub fn get_mut(&mut self, slot: &str) -> Option<&mut Value> {
        self.bindings.iter_mut().find(|b| b.slot == slot).map(|b| &mut b.value)
    }

    /// Bind `slot`, replacing an existing binding in place.
    pub fn set(&mut self, slot: &str, value: Value) {
        match self.get_mut(slot) {
            Some(v) => *v = value,
            None => self.bindings.push(Binding::new(slot, value)),
        }
    }

    pub fn remove(&mut self, slot: &str) -> Option<Value> {
        let pos = self.bindings.iter().position(|b| b.slot == slot)?;
        Some(self.bindings.remove(pos).value)
    }

    pub fn slot_names(&self) -> impl Iterator<Item = &str> {
        self.bindings.iter().map(|b| b.slot.as_str())
    }

    pub fn is_noop(&self) -> bool {
        self.op == NOOP
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.op)?;
        for (i, b) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} = {}", b.slot, b.value)?;
        }
        f.write_str(");")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    Loop,
    Branch,
}

/// A loop or branch governing a contiguous instruction range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBlock {
    pub kind: ControlKind,
    /// Signal keyword as written (e.g. `repeat`, `until`, `if`).
    pub signal: String,
    /// Opaque predicate text (e.g. `the endpoint is reached`).
    pub predicate: String,
    /// Declared iteration count for bounded loops.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
    /// First governed instruction.
    pub start: usize,
    /// Last governed instruction (inclusive).
    pub end: usize,
}

impl ControlBlock {
    pub fn contains(&self, index: usize) -> bool {
        (self.start..=self.end).contains(&index)
    }
}

/// What the protocol produces, used by the terminal consumption rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Product {
    /// A named reagent, e.g. `yield "purified product";`.
    Reagent(String),
    /// Servings or plates, e.g. `Yield: 2 plates`; everything left is served.
    Servings(Quantity),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Extraction,
    Synthesis,
    Control,
    Flow,
    Completion,
    Linking,
    Execution,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Extraction => "extraction",
            Stage::Synthesis => "synthesis",
            Stage::Control => "control",
            Stage::Flow => "flow",
            Stage::Completion => "completion",
            Stage::Linking => "linking",
            Stage::Execution => "execution",
        };
        f.write_str(s)
    }
}

/// An item on the review checklist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewFlag {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
    pub reason: String,
}

impl fmt::Display for ReviewFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.stage)?;
        if let Some(s) = self.step {
            write!(f, " step {}", s + 1)?;
        }
        if let Some(i) = self.instruction {
            write!(f, " instruction {i}")?;
        }
        if let Some(p) = &self.parameter {
            write!(f, " {p}:")?;
        }
        write!(f, " {}", self.reason)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DslProgram {
    pub instructions: Vec<Instruction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub controls: Vec<ControlBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product: Option<Product>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<ReviewFlag>,
}

impl DslProgram {
    pub fn new(instructions: Vec<Instruction>) -> Self {
        DslProgram { instructions, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn actions(&self) -> Vec<&str> {
        self.instructions.iter().map(|i| i.op.as_str()).collect()
    }

    /// Insert an instruction at `index`, shifting control ranges.
    pub fn insert(&mut self, index: usize, instr: Instruction) {
        self.instructions.insert(index, instr);
        for c in &mut self.controls {
            if c.start >= index {
                c.start += 1;
            }
            if c.end >= index {
                c.end += 1;
            }
        }
        for f in &mut self.flags {
            if let Some(i) = f.instruction.as_mut() {
                if *i >= index {
                    *i += 1;
                }
            }
        }
    }

    /// Remove the instruction at `index`, shrinking or dropping control ranges.
    pub fn delete(&mut self, index: usize) -> Instruction {
        let removed = self.instructions.remove(index);
        self.controls.retain(|c| !(c.start == index && c.end == index));
        for c in &mut self.controls {
            if c.start > index {
                c.start -= 1;
            }
            if c.end >= index && c.end > 0 {
                c.end -= 1;
            }
        }
        self.flags.retain(|f| f.instruction != Some(index));
        for f in &mut self.flags {
            if let Some(i) = f.instruction.as_mut() {
                if *i > index {
                    *i -= 1;
                }
            }
        }
        removed
    }

    /// Render the readable listing.
    pub fn to_listing(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.product {
            match p {
                Product::Reagent(r) => writeln!(out, "yield \"{r}\";").ok(),
                Product::Servings(q) => writeln!(out, "yield {q};").ok(),
            };
        }
        let mut depth = 0usize;
        for (i, instr) in self.instructions.iter().enumerate() {
            for c in self.controls.iter().filter(|c| c.start == i) {
                let kw = match c.kind {
                    ControlKind::Loop => "loop",
                    ControlKind::Branch => "branch",
                };
                write!(out, "{}{kw}(signal = \"{}\", predicate = \"{}\"", "    ".repeat(depth), c.signal, c.predicate).ok();
                if let Some(n) = c.count {
                    write!(out, ", count = {n}").ok();
                }
                out.push_str(") {\n");
                depth += 1;
            }
            writeln!(out, "{}{instr}", "    ".repeat(depth)).ok();
            for _ in self.controls.iter().filter(|c| c.end == i) {
                depth = depth.saturating_sub(1);
                writeln!(out, "{}}}", "    ".repeat(depth)).ok();
            }
        }
        out
    }

    /// Parse a listing produced by [`DslProgram::to_listing`] or written by hand.
    pub fn from_listing(src: &str) -> Result<DslProgram, ListingError> {
        ListingParser::new(src)?.program()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("listing line {line}: {message}")]
pub struct ListingError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Raw(String),
    Punct(char),
}

struct ListingParser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl ListingParser {
    fn new(src: &str) -> Result<Self, ListingError> {
        let mut toks = Vec::new();
        let chars: Vec<char> = src.chars().collect();
        let mut i = 0;
        let mut line = 1;
        while i < chars.len() {
            let c = chars[i];
            if c == '\n' {
                line += 1;
                i += 1;
            } else if c.is_whitespace() {
                i += 1;
            } else if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            } else if c == '"' {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(ListingError { line, message: "unterminated string".into() }),
                        Some('\\') => {
                            if let Some(&n) = chars.get(i + 1) {
                                s.push(n);
                            }
                            i += 2;
                        }
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some(&ch) => {
                            if ch == '\n' {
                                line += 1;
                            }
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                toks.push((Tok::Str(s), line));
            } else if src_starts(&chars, i, MASK_TOKEN) {
                toks.push((Tok::Raw(MASK_TOKEN.into()), line));
                i += MASK_TOKEN.chars().count();
            } else if "()[]{},=;?".contains(c) {
                toks.push((Tok::Punct(c), line));
                i += 1;
            } else if c.is_ascii_digit() || c == '.' || c == '~' {
                let mut s = String::new();
                while i < chars.len() && !",;)]}\n".contains(chars[i]) {
                    s.push(chars[i]);
                    i += 1;
                }
                toks.push((Tok::Raw(s.trim().to_string()), line));
            } else if c.is_alphanumeric() || c == '_' {
                let mut s = String::new();
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    s.push(chars[i]);
                    i += 1;
                }
                toks.push((Tok::Ident(s), line));
            } else {
                return Err(ListingError { line, message: format!("unexpected character {c:?}") });
            }
        }
        Ok(ListingParser { toks, pos: 0 })
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).or(self.toks.last()).map_or(1, |t| t.1)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ListingError> {
        Err(ListingError { line: self.line(), message: message.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, c: char) -> Result<(), ListingError> {
        match self.next() {
            Some(Tok::Punct(p)) if p == c => Ok(()),
            other => {
                self.pos -= 1;
                self.err(format!("expected {c:?}, found {other:?}"))
            }
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn program(mut self) -> Result<DslProgram, ListingError> {
        let mut program = DslProgram::default();
        let mut open: Vec<ControlBlock> = Vec::new();
        while let Some(tok) = self.next() {
            match tok {
                Tok::Punct(';') => {}
                Tok::Punct('}') => {
                    let Some(mut block) = open.pop() else { return self.err("unbalanced '}'") };
                    if program.instructions.len() <= block.start {
                        return self.err("empty control block");
                    }
                    block.end = program.instructions.len() - 1;
                    program.controls.push(block);
                }
                Tok::Ident(name) if name == "yield" => {
                    let v = self.value()?;
                    program.product = Some(match v {
                        Value::Quantity(q) => Product::Servings(q),
                        other => Product::Reagent(other.plain()),
                    });
                    self.eat(';');
                }
                Tok::Ident(name) if (name == "loop" || name == "branch") && self.peek() == Some(&Tok::Punct('(')) => {
                    let args = self.args()?;
                    if !self.eat('{') {
                        // a plain instruction that happens to be called loop/branch
                        program.instructions.push(Instruction { op: name, bindings: args, origin: None });
                        self.eat(';');
                        continue;
                    }
                    let get = |k: &str| args.iter().find(|b| b.slot == k).map(|b| b.value.plain());
                    let count = args.iter().find(|b| b.slot == "count").and_then(|b| match &b.value {
                        Value::Quantity(q) => Some(q.magnitude.lo() as u32),
                        _ => None,
                    });
                    open.push(ControlBlock {
                        kind: if name == "loop" { ControlKind::Loop } else { ControlKind::Branch },
                        signal: get("signal").unwrap_or_default(),
                        predicate: get("predicate").unwrap_or_default(),
                        count,
                        start: program.instructions.len(),
                        end: 0,
                    });
                }
                Tok::Ident(op) => {
                    let bindings = self.args()?;
                    program.instructions.push(Instruction { op, bindings, origin: None });
                    if !self.eat(';') && !matches!(self.peek(), None | Some(Tok::Punct('}'))) {
                        return self.err("expected ';' after instruction");
                    }
                }
                other => {
                    self.pos -= 1;
                    return self.err(format!("unexpected token {other:?}"));
                }
            }
        }
        if !open.is_empty() {
            return self.err("unclosed control block");
        }
        program.controls.sort_by_key(|c| (c.start, std::cmp::Reverse(c.end)));
        Ok(program)
    }

    fn args(&mut self) -> Result<Vec<Binding>, ListingError> {
        self.expect('(')?;
        let mut out = Vec::new();
        if self.eat(')') {
            return Ok(out);
        }
        loop {
            let slot = match self.next() {
                Some(Tok::Ident(s)) => s,
                other => {
                    self.pos -= 1;
                    return self.err(format!("expected slot name, found {other:?}"));
                }
            };
            self.expect('=')?;
            let value = self.value()?;
            out.push(Binding { slot, value });
            if self.eat(')') {
                return Ok(out);
            }
            self.expect(',')?;
        }
    }

    fn value(&mut self) -> Result<Value, ListingError> {
        match self.next() {
            Some(Tok::Str(s)) => Ok(Value::Text(s)),
            Some(Tok::Punct('?')) => Ok(Value::Missing),
            Some(Tok::Punct('[')) => {
                let mut items = Vec::new();
                if self.eat(']') {
                    return Ok(Value::List(items));
                }
                loop {
                    items.push(self.value()?);
                    if self.eat(']') {
                        return Ok(Value::List(items));
                    }
                    self.expect(',')?;
                }
            }
            Some(Tok::Raw(r)) if r == MASK_TOKEN => Ok(Value::Mask),
            Some(Tok::Raw(r)) => match parse_quantity(&r) {
                Some(q) => Ok(Value::Quantity(q)),
                None => self.err(format!("bad quantity {r:?}")),
            },
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::Punct('(')) {
                    let args = self.args()?;
                    Ok(Value::Call(Call { name, args }))
                } else {
                    Ok(Value::Symbol(name))
                }
            }
            other => {
                self.pos -= 1;
                self.err(format!("expected value, found {other:?}"))
            }
        }
    }
}

fn src_starts(chars: &[char], i: usize, pat: &str) -> bool {
    pat.chars().enumerate().all(|(k, p)| chars.get(i + k) == Some(&p))
}
