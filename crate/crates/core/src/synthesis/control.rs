//! Loop/branch signals, hooks and subordinate clauses attached after synthesis.

use regex::Regex;

use super::instruction_units;
use crate::dsl::{DslSpec, HookKind, OperationSchema, Role};
use crate::preprocess::entities::Label;
use crate::preprocess::lexicon::{is_in, DETERMINERS};
use crate::preprocess::{ActionUnit, Clause, EntitySequence, UnitKind};
use crate::program::{Binding, Call, ControlBlock, ControlKind, DslProgram, Instruction, ReviewFlag, Stage, Value};

fn strip_markup(s: &str) -> String {
    s.chars().filter(|c| !"@{}|<>[]~".contains(*c)).collect::<String>().trim().trim_end_matches(['.', ',', ';']).to_string()
}

fn drop_determiners(s: &str) -> String {
    let words: Vec<&str> = s.split_whitespace().collect();
    let skip = words.iter().take_while(|w| is_in(DETERMINERS, &w.to_lowercase())).count();
    words[skip..].join(" ")
}

/// A state hook whose surface pattern matches `text`, e.g. "the beef is done".
fn match_state_hook(text: &str, spec: &DslSpec) -> Option<Call> {
    let text = strip_markup(text);
    for (name, hook) in &spec.semantics.control.hooks {
        if hook.kind != HookKind::State {
            continue;
        }
        for pattern in &hook.patterns {
            let re = format!("(?i)^{}$", regex::escape(pattern).replace(r"\{target\}", "(?P<target>.+?)"));
            let Ok(re) = Regex::new(&re) else { continue };
            if let Some(c) = re.captures(&text) {
                let args =
                    c.name("target").map(|m| vec![Binding::new("target", Value::text(drop_determiners(m.as_str())))]).unwrap_or_default();
                return Some(Call { name: name.clone(), args });
            }
        }
    }
    None
}

fn action_hook(unit: &ActionUnit, spec: &DslSpec) -> Option<Call> {
    let use_ = unit.hook.as_ref()?;
    let schema = spec.hook(&use_.name)?;
    let args = match (schema.args.first(), unit.entities.first()) {
        (Some(arg), Some(e)) => vec![Binding::new(arg.clone(), Value::text(e.surface.clone()))],
        _ => Vec::new(),
    };
    Some(Call { name: use_.name.clone(), args })
}

/// Name of the control slot of `op` whose name starts with `prefix` ("pre" / "post").
fn control_slot(op: &OperationSchema, prefix: &str) -> Option<String> {
    op.slots
        .iter()
        .filter(|s| s.role == Role::Control)
        .find(|s| s.name.to_lowercase().starts_with(prefix) || s.via.as_deref().is_some_and(|v| v.to_lowercase().starts_with(prefix)))
        .map(|s| s.name.clone())
}

fn condition_slot(op: &OperationSchema, label: Label, spec: &DslSpec) -> Option<String> {
    op.slots
        .iter()
        .filter(|s| s.role == Role::Condition)
        .find(|s| spec.parameter(&s.name).is_some_and(|p| p.accepts_label(label.as_str())))
        .map(|s| s.name.clone())
}

fn unbound(instr: &Instruction, slot: &str) -> bool {
    instr.get(slot).is_none_or(|v| *v == Value::Missing)
}

/// Bind `slot` if it is free and the result still fits a pattern.
fn try_bind(instr: &mut Instruction, slot: &str, value: Value, spec: &DslSpec) -> bool {
    if !unbound(instr, slot) {
        return false;
    }
    let Some(op) = spec.operation(&instr.op) else { return false };
    let mut names: Vec<String> = instr.bindings.iter().map(|b| spec.canonical_slot(&b.slot).to_string()).collect();
    if !names.iter().any(|n| n == slot) {
        names.push(slot.to_string());
    }
    let fits = op.patterns.iter().any(|p| p.len() == names.len() && names.iter().all(|n| p.has(n)));
    if fits {
        instr.set(slot, value);
    }
    fits
}

/// Smallest range containing `start..=end` that nests with every existing block.
pub(crate) fn nest(controls: &[ControlBlock], mut start: usize, mut end: usize) -> (usize, usize) {
    loop {
        let mut grown = false;
        for c in controls {
            let crosses = (c.start < start && start <= c.end && c.end < end) || (start < c.start && c.start <= end && end < c.end);
            if crosses {
                start = start.min(c.start);
                end = end.max(c.end);
                grown = true;
            }
        }
        if !grown {
            return (start, end);
        }
    }
}

struct Detector<'a> {
    spec: &'a DslSpec,
    program: DslProgram,
}

impl Detector<'_> {
    fn flag(&mut self, unit: &ActionUnit, instruction: Option<usize>, reason: String) {
        self.program.flags.push(ReviewFlag { stage: Stage::Control, step: Some(unit.step), instruction, parameter: None, reason });
    }

    fn wrap(&mut self, kind: ControlKind, signal: &str, predicate: &str, count: Option<u32>, start: usize, end: usize) {
        let (start, end) = nest(&self.program.controls, start, end);
        self.program.controls.push(ControlBlock {
            kind,
            signal: signal.to_string(),
            predicate: strip_markup(predicate),
            count,
            start,
            end,
        });
    }

    fn set_condition(&mut self, at: usize, prefix: &str, call: Call) -> bool {
        let instr = &self.program.instructions[at];
        let Some(op) = self.spec.operation(&instr.op) else { return false };
        let Some(slot) = control_slot(op, prefix) else { return false };
        try_bind(&mut self.program.instructions[at], &slot, Value::Call(call), self.spec)
    }

    fn leading(&mut self, unit: &ActionUnit, clause: &Clause, at: usize, prev: Option<usize>, step_end: usize) {
        let kw = clause.keyword.as_str();
        if let Some(call) = match_state_hook(&clause.text, self.spec) {
            if !self.set_condition(at, "pre", call) {
                self.wrap(ControlKind::Branch, kw, &clause.text, None, at, step_end);
            }
            return;
        }
        let duration = clause.entities.iter().find(|e| e.label == Label::Duration).and_then(|e| e.quantity());
        if let Some(d) = duration.filter(|_| matches!(kw, "after" | "once" | "when")) {
            let placed = prev.is_some_and(|p| {
                let op = self.spec.operation(&self.program.instructions[p].op);
                let slot = op.and_then(|o| condition_slot(o, Label::Duration, self.spec));
                slot.is_some_and(|s| try_bind(&mut self.program.instructions[p], &s, Value::Quantity(d.clone()), self.spec))
            });
            if !placed {
                self.flag(unit, Some(at), format!("unresolved control signal `{kw} {}`: no preceding step takes a duration", clause.text));
            }
            return;
        }
        if is_in(&self.spec.semantics.control.branch_keywords.iter().map(String::as_str).collect::<Vec<_>>(), kw) || kw == "unless" {
            self.wrap(ControlKind::Branch, kw, &clause.text, None, at, step_end);
        }
    }

    fn trailing(&mut self, clause: &Clause, at: usize) {
        let instr = &self.program.instructions[at];
        let continuous = self.spec.operation(&instr.op).is_some_and(|o| o.continuous);
        match clause.keyword.as_str() {
            "until" => {
                if let Some(call) = match_state_hook(&clause.text, self.spec) {
                    if self.set_condition(at, "post", call) {
                        return;
                    }
                }
                // a running operation simply stops; a discrete one repeats
                if !continuous {
                    self.wrap(ControlKind::Loop, "until", &clause.text, None, at, at);
                }
            }
            "when" | "if" => {
                if let Some(call) = match_state_hook(&clause.text, self.spec) {
                    if self.set_condition(at, "pre", call) {
                        return;
                    }
                }
                if !clause.text.trim().is_empty() {
                    self.wrap(ControlKind::Branch, &clause.keyword, &clause.text, None, at, at);
                }
            }
            _ => {}
        }
    }

    fn repeat(&mut self, unit: &ActionUnit, units: &[(usize, &ActionUnit)], prev: Option<usize>) {
        let r = unit.repeat.as_ref().expect("loop units carry repeat info");
        let predicate = unit.trailing.iter().find(|c| c.keyword == "until" || c.keyword == "while");
        let signal = predicate.map_or("repeat", |c| c.keyword.as_str()).to_string();
        let predicate = predicate.map_or(String::new(), |c| c.text.clone());
        let by_step = r.steps.and_then(|(a, b)| {
            let idx: Vec<usize> = units.iter().filter(|(_, u)| u.step + 1 >= a && u.step < b).map(|(i, _)| *i).collect();
            Some((*idx.iter().min()?, *idx.iter().max()?))
        });
        let by_op = || {
            let name = r.operation.as_deref()?;
            let k = (0..prev? + 1).rev().find(|&k| self.program.instructions[k].op == name)?;
            Some((k, k))
        };
        let by_prev_step = || {
            let p = prev?;
            let step = units.iter().find(|(i, _)| *i == p)?.1.step;
            let first = units.iter().filter(|(_, u)| u.step == step).map(|(i, _)| *i).min()?;
            Some((first, p))
        };
        match by_step.or_else(by_op).or_else(by_prev_step) {
            Some((s, e)) => self.wrap(ControlKind::Loop, &signal, &predicate, r.count, s, e),
            None => self.flag(unit, None, "unresolved control signal `repeat`: nothing to repeat".into()),
        }
    }
}

/// Attach loop/branch wrappers, pre/post-condition hooks and durations carried
/// by subordinate clauses.
pub fn detect_control_flow(seq: &EntitySequence, program: DslProgram, spec: &DslSpec) -> DslProgram {
    let paired = instruction_units(seq).len() == program.instructions.len();
    let mut d = Detector { spec, program };
    if !paired {
        return d.program;
    }
    // instruction index for each op/placeholder unit
    let mut next = 0;
    let mut placed: Vec<(Option<usize>, &ActionUnit)> = Vec::new();
    for u in &seq.units {
        if matches!(u.kind, UnitKind::Operation | UnitKind::Placeholder) {
            placed.push((Some(next), u));
            next += 1;
        } else {
            placed.push((None, u));
        }
    }
    let indexed: Vec<(usize, &ActionUnit)> = placed.iter().filter_map(|(i, u)| Some(((*i)?, *u))).collect();
    let mut prev: Option<usize> = None;
    for (slot, unit) in &placed {
        match (slot, unit.kind) {
            (Some(at), _) => {
                let at = *at;
                let step_end = indexed.iter().filter(|(_, u)| u.step == unit.step).map(|(i, _)| *i).max().unwrap_or(at);
                if let Some(clause) = &unit.leading {
                    d.leading(unit, clause, at, prev, step_end);
                }
                if !d.program.instructions[at].is_noop() {
                    for clause in &unit.trailing {
                        d.trailing(clause, at);
                    }
                }
                prev = Some(at);
            }
            (None, UnitKind::Hook) => {
                let Some(call) = action_hook(unit, spec) else { continue };
                let name = call.name.clone();
                let ok = prev.is_some_and(|p| d.set_condition(p, "post", call));
                if !ok {
                    d.flag(unit, prev, format!("unresolved control signal: hook `{name}` has no operation to attach to"));
                }
            }
            (None, UnitKind::Loop) => d.repeat(unit, &indexed, prev),
            (None, _) => {}
        }
    }
    d.program
}
