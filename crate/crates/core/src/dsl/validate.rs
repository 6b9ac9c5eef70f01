//! Syntax checking of programs against the pattern space.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::DslSpec;
use crate::program::{DslProgram, Instruction, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    UnknownOperation,
    UnknownSlot,
    DuplicateSlot,
    MissingRequiredSlot,
    Arity,
    ValueClass,
    UnknownHook,
    NoMatchingPattern,
    ControlRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub instruction: usize,
    pub kind: ViolationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "instruction {}", self.instruction)?;
        if let Some(s) = &self.slot {
            write!(f, " slot `{s}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionReport {
    pub index: usize,
    pub op: String,
    /// Index into the operation's pattern list when the instruction parses.
    pub pattern: Option<usize>,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub instructions: Vec<InstructionReport>,
    /// Program-level problems (control ranges).
    pub program: Vec<Violation>,
}

impl ValidationReport {
    /// True iff every instruction parses and control ranges are well formed.
    pub fn is_verified(&self) -> bool {
        self.program.is_empty() && self.instructions.iter().all(|r| r.violations.is_empty())
    }

    pub fn violations(&self) -> impl Iterator<Item = &Violation> {
        self.instructions.iter().flat_map(|r| r.violations.iter()).chain(self.program.iter())
    }
}

pub fn validate_program(program: &DslProgram, spec: &DslSpec) -> ValidationReport {
    let instructions = program.instructions.iter().enumerate().map(|(i, instr)| validate_instruction(i, instr, spec)).collect();
    let mut report = ValidationReport { instructions, program: Vec::new() };
    check_controls(program, &mut report.program);
    report
}

fn check_controls(program: &DslProgram, out: &mut Vec<Violation>) {
    let n = program.instructions.len();
    for (k, c) in program.controls.iter().enumerate() {
        if c.start > c.end || c.end >= n {
            out.push(Violation {
                instruction: c.start,
                kind: ViolationKind::ControlRange,
                slot: None,
                message: format!("control range {}..={} is outside the program", c.start, c.end),
            });
            continue;
        }
        for d in &program.controls[k + 1..] {
            let disjoint = d.end < c.start || c.end < d.start;
            let nested = (c.start <= d.start && d.end <= c.end) || (d.start <= c.start && c.end <= d.end);
            if !disjoint && !nested {
                out.push(Violation {
                    instruction: c.start,
                    kind: ViolationKind::ControlRange,
                    slot: None,
                    message: format!("control ranges {}..={} and {}..={} cross", c.start, c.end, d.start, d.end),
                });
            }
        }
    }
}

fn validate_instruction(index: usize, instr: &Instruction, spec: &DslSpec) -> InstructionReport {
    let mut report = InstructionReport { index, op: instr.op.clone(), pattern: None, violations: Vec::new() };
    if instr.is_noop() {
        return report;
    }
    let mut push = |kind, slot: Option<&str>, message: String| {
        report.violations.push(Violation { instruction: index, kind, slot: slot.map(str::to_string), message });
    };
    let Some(op) = spec.operation(&instr.op) else {
        push(ViolationKind::UnknownOperation, None, format!("unknown operation `{}`", instr.op));
        return report;
    };

    let mut bound = BTreeSet::new();
    for b in &instr.bindings {
        let name = spec.canonical_slot(&b.slot);
        let Some(slot) = op.slot(name) else {
            push(ViolationKind::UnknownSlot, Some(&b.slot), format!("`{}` has no slot `{}`", op.name, b.slot));
            continue;
        };
        if !bound.insert(name.to_string()) {
            push(ViolationKind::DuplicateSlot, Some(&b.slot), "slot bound twice".into());
            continue;
        }
        let arity = b.value.arity();
        if !b.value.is_unresolved() && (arity < slot.min_arity || arity > slot.max_arity) {
            push(ViolationKind::Arity, Some(&b.slot), format!("{arity} values where {}..={} allowed", slot.min_arity, slot.max_arity));
        }
        if let Some(param) = spec.parameter(name) {
            for item in b.value.items() {
                // a declared proxy ("medium heat") stands for its quantity
                let proxy = matches!(item, Value::Text(t) if spec.alias_for(name, t).is_some());
                if let Some(class) = value_class(item).filter(|_| !proxy) {
                    if !param.classes.is_empty() && !param.classes.iter().any(|c| c == class) {
                        push(
                            ViolationKind::ValueClass,
                            Some(&b.slot),
                            format!("{class} value not allowed (expects {})", param.classes.join("|")),
                        );
                    }
                }
                if let Value::Call(call) = item {
                    if spec.hook(&call.name).is_none() {
                        push(ViolationKind::UnknownHook, Some(&b.slot), format!("unknown hook `{}`", call.name));
                    }
                }
            }
        }
    }
    for s in op.slots.iter().filter(|s| s.required) {
        if !bound.contains(&s.name) {
            push(ViolationKind::MissingRequiredSlot, Some(&s.name), format!("required slot `{}` is unbound", s.name));
        }
    }
    let matched =
        op.patterns.iter().position(|p| p.slot_layout.len() == bound.len() && p.slot_layout.iter().all(|s| bound.contains(&s.name)));
    match matched {
        Some(k) => {
            if report.violations.is_empty() {
                report.pattern = Some(k);
            }
        }
        None if report.violations.is_empty() => {
            let slots: Vec<&str> = bound.iter().map(String::as_str).collect();
            report.violations.push(Violation {
                instruction: index,
                kind: ViolationKind::NoMatchingPattern,
                slot: None,
                message: format!("slot combination ({}) is not a pattern of `{}`", slots.join(", "), op.name),
            });
        }
        None => {}
    }
    report
}

fn value_class(v: &Value) -> Option<&'static str> {
    match v {
        Value::Text(_) => Some("string"),
        Value::Symbol(_) => Some("symbol"),
        Value::Quantity(_) => Some("quantity"),
        Value::Call(_) => Some("call"),
        Value::List(_) | Value::Missing | Value::Mask => None,
    }
}
