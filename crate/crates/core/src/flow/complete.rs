//! Completion of implicit knowledge: proxy values, defaults, termination and
//! preconditions that need an operation to wait on.

use std::collections::BTreeSet;

use super::link::{bind_if_fits, fits_pattern};
use super::names::{normalize_name, same_name};
use super::{analyze_flow, FlowError, ReagentFlowGraph};
use crate::dsl::{DslSpec, HookKind, OperationSchema, Role};
use crate::extractor::ExtractorGateway;
use crate::program::{Call, DslProgram, Instruction, ReviewFlag, Stage, Value};

fn control_slot<'a>(op: &'a OperationSchema, prefix: &str) -> Option<&'a str> {
    op.slots
        .iter()
        .filter(|s| s.role == Role::Control)
        .find(|s| s.name.starts_with(prefix) || s.via.as_deref().is_some_and(|v| v.to_lowercase().starts_with(prefix)))
        .map(|s| s.name.as_str())
}

/// Replace a proxy or range with the value the model can use.
fn complete_value(value: &Value, param: &str, spec: &DslSpec) -> Value {
    let Some(schema) = spec.parameter(param) else { return value.clone() };
    match value {
        Value::Text(t) => match spec.alias_for(param, &normalize_name(t)).or_else(|| spec.alias_for(param, t)) {
            Some(q) => complete_value(&Value::Quantity(q.clone()), param, spec),
            None => value.clone(),
        },
        Value::Quantity(q) if schema.setpoint && q.is_range() => Value::Quantity(q.collapsed()),
        Value::List(items) => Value::List(items.iter().map(|v| complete_value(v, param, spec)).collect()),
        _ => value.clone(),
    }
}

/// COMPLETE: proxies through the alias table, setpoint ranges to their
/// midpoint, operation defaults, then `<<<MASK>>>` plus a review flag for
/// key parameters nothing can supply. Unfilled optional slots are dropped.
/// Applying it twice changes nothing.
pub fn complete_parameters(program: &DslProgram, spec: &DslSpec, _gateway: &ExtractorGateway) -> DslProgram {
    let mut out = program.clone();
    for (i, instr) in out.instructions.iter_mut().enumerate() {
        let Some(op) = spec.operation(&instr.op) else { continue };
        for b in &mut instr.bindings {
            let param = spec.canonical_slot(&b.slot).to_string();
            b.value = complete_value(&b.value, &param, spec);
        }
        // optional gaps the pattern no longer needs
        let optional_gaps: Vec<String> = instr
            .bindings
            .iter()
            .filter(|b| b.value == Value::Missing)
            .filter(|b| op.slot(spec.canonical_slot(&b.slot)).is_some_and(|s| !s.required))
            .map(|b| b.slot.clone())
            .collect();
        let kept: Vec<String> =
            instr.bindings.iter().filter(|b| !optional_gaps.contains(&b.slot)).map(|b| spec.canonical_slot(&b.slot).to_string()).collect();
        if !optional_gaps.is_empty() && fits_pattern(op, &kept) {
            for g in optional_gaps {
                instr.remove(&g);
            }
        }
        for slot in op.slots.iter().filter(|s| s.required && !s.role.is_deferred()) {
            let current = instr.bindings.iter().find(|b| spec.canonical_slot(&b.slot) == slot.name).map(|b| b.value.clone());
            if !matches!(current, None | Some(Value::Missing)) {
                continue;
            }
            match op.defaults.get(&slot.name) {
                Some(v) => instr.set(&slot.name, complete_value(v, &slot.name, spec)),
                None => {
                    instr.set(&slot.name, Value::Mask);
                    out.flags.push(ReviewFlag {
                        stage: Stage::Completion,
                        step: instr.origin.map(|o| o.step),
                        instruction: Some(i),
                        parameter: Some(slot.name.clone()),
                        reason: format!("missing key parameter `{}` of `{}`", slot.name, instr.op),
                    });
                }
            }
        }
        // a list slot may still hold gaps after linking
        for b in &mut instr.bindings {
            if let Value::List(items) = &mut b.value {
                if items.contains(&Value::Missing) {
                    for v in items.iter_mut().filter(|v| **v == Value::Missing) {
                        *v = Value::Mask;
                    }
                    out.flags.push(ReviewFlag {
                        stage: Stage::Completion,
                        step: instr.origin.map(|o| o.step),
                        instruction: Some(i),
                        parameter: Some(spec.canonical_slot(&b.slot).to_string()),
                        reason: format!("missing reagent in `{}` of `{}`", b.slot, instr.op),
                    });
                }
            }
        }
    }
    out
}

/// A continuous operation with no duration and no postcondition runs until
/// someone turns it off: give it `postcond = stop()`.
pub fn complete_termination(program: &DslProgram, spec: &DslSpec) -> DslProgram {
    let mut out = program.clone();
    if spec.hook("stop").is_none() {
        return out;
    }
    for instr in &mut out.instructions {
        let Some(op) = spec.operation(&instr.op).filter(|o| o.continuous) else { continue };
        let Some(post) = control_slot(op, "post") else { continue };
        let timed = instr.bindings.iter().any(|b| {
            let name = spec.canonical_slot(&b.slot);
            name == post || spec.parameter(name).is_some_and(|p| p.unit == Some(crate::units::Dimension::Duration))
        });
        if !timed {
            bind_if_fits(instr, op, post, Value::Call(Call { name: "stop".into(), args: Vec::new() }), spec);
        }
    }
    out
}

fn waited_reagent(instr: &Instruction, op: &OperationSchema, spec: &DslSpec) -> Option<(String, Call)> {
    let pre = control_slot(op, "pre")?;
    let Some(Value::Call(call)) = instr.bindings.iter().find(|b| spec.canonical_slot(&b.slot) == pre).map(|b| &b.value) else {
        return None;
    };
    if spec.hook(&call.name).map(|h| h.kind) != Some(HookKind::State) {
        return None;
    }
    let target = call.args.iter().find(|a| a.slot == "target")?.value.plain();
    Some((normalize_name(&target), call.clone()))
}

fn ancestors(graph: &ReagentFlowGraph, roots: &[String]) -> BTreeSet<String> {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut todo: Vec<String> = roots.to_vec();
    while let Some(id) = todo.pop() {
        if !seen.insert(id.clone()) {
            continue;
        }
        if let Some(l) = graph.reagent(&id) {
            if let Some(step) = graph.steps.get(l.defined_at) {
                todo.extend(step.kills.iter().filter(|k| **k != id).cloned());
            }
        }
    }
    seen
}

fn descendants(graph: &ReagentFlowGraph, roots: &[String]) -> BTreeSet<String> {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut todo: Vec<String> = roots.to_vec();
    while let Some(id) = todo.pop() {
        if !seen.insert(id.clone()) {
            continue;
        }
        if let Some(k) = graph.reagent(&id).and_then(|l| l.killed_at) {
            todo.extend(graph.steps[k].defines.iter().cloned());
        }
    }
    seen
}

/// A precondition waiting on a reagent that was already absorbed into a
/// lineage, with nothing cooking that lineage afterwards, gets the latest
/// continuous operation on the lineage repeated right after the absorption,
/// running until the precondition holds.
pub fn complete_preconditions(program: &DslProgram, spec: &DslSpec, gateway: &ExtractorGateway) -> Result<DslProgram, FlowError> {
    let mut out = program.clone();
    let mut handled: BTreeSet<(usize, String)> = BTreeSet::new();
    loop {
        let graph = analyze_flow(&out, spec, gateway)?;
        let mut insertion: Option<(usize, Instruction)> = None;
        for (p, instr) in out.instructions.iter().enumerate() {
            let Some(op) = spec.operation(&instr.op) else { continue };
            let Some((waited, call)) = waited_reagent(instr, op, spec) else { continue };
            if handled.contains(&(p, waited.clone())) {
                continue;
            }
            let absorbed =
                graph.reagents.iter().filter(|l| same_name(&normalize_name(&l.name), &waited)).find_map(|l| l.killed_at.filter(|&a| a < p));
            let Some(a) = absorbed else { continue };
            let lineage = graph.steps[a].defines.clone();
            if lineage.is_empty() {
                continue;
            }
            let after = descendants(&graph, &lineage);
            let continuous = |k: usize| spec.operation(&out.instructions[k].op).is_some_and(|o| o.continuous);
            let busy = (a + 1..p).any(|k| continuous(k) && graph.steps[k].mutates.iter().any(|m| after.contains(m)));
            let already = out.instructions.get(a + 1).is_some_and(|next| {
                next.bindings
                    .iter()
                    .any(|b| b.value == Value::Call(call.clone()) && op_post(next, spec).is_some_and(|s| spec.canonical_slot(&b.slot) == s))
            });
            if busy || already {
                handled.insert((p, waited));
                continue;
            }
            let before = ancestors(&graph, &lineage);
            let source = (0..a).rev().find(|&k| continuous(k) && graph.steps[k].mutates.iter().any(|m| before.contains(m)));
            let Some(k) = source else {
                handled.insert((p, waited));
                continue;
            };
            let mut copy = out.instructions[k].clone();
            let Some(copy_op) = spec.operation(&copy.op) else { continue };
            let Some(post) = control_slot(copy_op, "post") else {
                handled.insert((p, waited));
                continue;
            };
            let durations: Vec<String> = copy
                .bindings
                .iter()
                .filter(|b| {
                    let name = spec.canonical_slot(&b.slot);
                    name == post || spec.parameter(name).is_some_and(|s| s.unit == Some(crate::units::Dimension::Duration))
                })
                .map(|b| b.slot.clone())
                .collect();
            for d in durations {
                copy.remove(&d);
            }
            handled.insert((p + 1, waited));
            if bind_if_fits(&mut copy, copy_op, post, Value::Call(call), spec) {
                insertion = Some((a + 1, copy));
            }
            break;
        }
        match insertion {
            Some((at, instr)) => out.insert(at, instr),
            None => return Ok(out),
        }
    }
}

fn op_post<'a>(instr: &Instruction, spec: &'a DslSpec) -> Option<&'a str> {
    control_slot(spec.operation(&instr.op)?, "post")
}
