//! Linking: fill reagent gaps, anaphora, emits and containers in one pass over
//! the program while the flow machine tracks what is alive.

use std::collections::BTreeMap;

use super::names::{container_text, is_anaphora, symbolize};
use super::{instruction_record, resolve_output, FlowError, PdaMachine, ReagentRecord, RecordOrigin};
use crate::dsl::{DslSpec, Effect, OperationSchema, Role};
use crate::extractor::ExtractorGateway;
use crate::program::{DslProgram, Instruction, Value};

/// Bind `slot` when it is free and the slot set still fits a pattern.
pub(crate) fn bind_if_fits(instr: &mut Instruction, op: &OperationSchema, slot: &str, value: Value, spec: &DslSpec) -> bool {
    if instr.get(slot).is_some_and(|v| *v != Value::Missing) {
        return false;
    }
    let mut names: Vec<String> = instr.bindings.iter().map(|b| spec.canonical_slot(&b.slot).to_string()).collect();
    if !names.iter().any(|n| n == slot) {
        names.push(slot.to_string());
    }
    let fits = fits_pattern(op, &names);
    if fits {
        instr.set(slot, value);
    }
    fits
}

pub(crate) fn fits_pattern(op: &OperationSchema, names: &[String]) -> bool {
    op.patterns.iter().any(|p| p.len() == names.len() && names.iter().all(|n| p.has(n)))
}

fn as_value(r: &ReagentRecord) -> Value {
    match r.origin {
        RecordOrigin::Emitted => Value::symbol(r.name.clone()),
        RecordOrigin::Source => Value::text(r.name.clone()),
    }
}

/// Most recent live intermediate.
fn local_reagent(m: &PdaMachine) -> Option<&ReagentRecord> {
    m.memory.iter().rev().find(|r| r.origin == RecordOrigin::Emitted)
}

/// LINK: resolve missing and anaphoric targets by locality, ask the gateway
/// about other empty reagent slots, name intermediates and allocate vessels.
pub fn link_program(program: &DslProgram, spec: &DslSpec, gateway: &ExtractorGateway) -> Result<DslProgram, FlowError> {
    let mut out = program.clone();
    let mut m = PdaMachine::new(&out);
    let mut vessels: BTreeMap<String, usize> = BTreeMap::new();
    for i in 0..out.instructions.len() {
        let mut instr = out.instructions[i].clone();
        if let Some(op) = spec.operation(&instr.op) {
            link_instruction(i, &mut instr, op, spec, gateway, &mut m, &mut vessels)?;
        }
        out.instructions[i] = instr;
        m.force(i);
        m.transition(i, &out.instructions[i], spec, gateway)?;
    }
    Ok(out)
}

fn link_instruction(
    i: usize,
    instr: &mut Instruction,
    op: &OperationSchema,
    spec: &DslSpec,
    gateway: &ExtractorGateway,
    m: &mut PdaMachine,
    vessels: &mut BTreeMap<String, usize>,
) -> Result<(), FlowError> {
    // targets: gaps and anaphora go to the closest live intermediate
    if let Some(slot) = op.target_slot() {
        let current = instr.get(&slot.name).cloned();
        let anaphoric = matches!(&current, Some(Value::Text(t)) if is_anaphora(t, spec));
        if matches!(current, Some(Value::Missing)) || anaphoric {
            if let Some(r) = local_reagent(m) {
                instr.set(&slot.name, as_value(r));
            }
        }
    }

    // remaining reagent gaps: ask the gateway with memory as candidates
    let gaps: Vec<String> = instr
        .bindings
        .iter()
        .filter(|b| op.slot(spec.canonical_slot(&b.slot)).is_some_and(|s| s.role.is_reagent()))
        .filter(|b| b.value.items().iter().any(|v| **v == Value::Missing))
        .map(|b| b.slot.clone())
        .collect();
    if !gaps.is_empty() && !m.memory.is_empty() {
        let record = instruction_record(instr, spec);
        let candidates: Vec<String> = m.memory.iter().map(|r| r.name.clone()).collect();
        let mut picked = gateway
            .query_missing_reagents(&record, &candidates)
            .map_err(|source| super::FlowError::Extraction { index: i, source })?
            .into_iter();
        for slot in gaps {
            let value = instr.get(&slot).cloned().unwrap_or(Value::Missing);
            let filled = match value {
                Value::List(items) => Value::List(
                    items
                        .into_iter()
                        .map(|v| match v {
                            Value::Missing => picked.next().map_or(Value::Missing, |p| named_value(m, &p)),
                            v => v,
                        })
                        .collect(),
                ),
                Value::Missing => picked.next().map_or(Value::Missing, |p| named_value(m, &p)),
                v => v,
            };
            instr.set(&slot, filled);
        }
    }

    let target = op.target_slot().and_then(|s| instr.get(&s.name)).cloned();
    let target_record = target.as_ref().and_then(|t| match t {
        Value::Symbol(s) | Value::Text(s) => m.lookup(s).first().map(|r| (*r).clone()),
        _ => None,
    });
    let target_vessel = target.as_ref().and_then(|t| match t {
        Value::Text(s) => container_text(s, spec),
        _ => None,
    });

    // container: inherit from the target, otherwise open a new vessel
    if let Some(slot) = op.resource_slot() {
        if instr.get(&slot.name).is_none() {
            let inherited = target_record.as_ref().and_then(|r| r.container.clone()).or_else(|| {
                target_vessel.as_ref().and_then(|v| {
                    m.memory.iter().rev().find(|r| r.container.as_deref() == Some(v.as_str())).and_then(|r| r.container.clone())
                })
            });
            let container = match (inherited, &op.vessel) {
                (Some(c), _) => Some(c),
                (None, Some(vessel)) if target.is_some() => {
                    let n = vessels.entry(vessel.clone()).or_insert(0);
                    *n += 1;
                    Some(format!("{vessel}_{n}"))
                }
                _ => None,
            };
            if let Some(c) = container {
                bind_if_fits(instr, op, &slot.name, Value::symbol(c), spec);
            }
        }
    }

    // emit: combine steps name their product
    if op.effect == Effect::Combine {
        if let Some(slot) = op.output_slot() {
            if instr.get(&slot.name).is_none() {
                let name = match &op.produces {
                    Some(stem) => Some(m.fresh_name(stem)),
                    None => {
                        let mut candidates: Vec<String> = Vec::new();
                        for b in &instr.bindings {
                            let role = op.slot(spec.canonical_slot(&b.slot)).map(|s| s.role);
                            if !matches!(role, Some(Role::Target | Role::Input)) {
                                continue;
                            }
                            for v in b.value.items() {
                                let p = v.plain();
                                if !v.is_unresolved() && container_text(&p, spec).is_none() && !candidates.contains(&p) {
                                    candidates.push(p);
                                }
                            }
                        }
                        let target_name = target.as_ref().map(Value::plain);
                        match candidates.is_empty() {
                            true => None,
                            false => {
                                let chosen = resolve_output(i, instr, &candidates, spec, gateway)?;
                                // the target carries on unless something else is the product
                                (Some(&chosen) != target_name.as_ref()).then(|| symbolize(&chosen))
                            }
                        }
                    }
                };
                if let Some(name) = name {
                    bind_if_fits(instr, op, &slot.name, Value::symbol(name.clone()), spec);
                    m.emits.insert(name);
                }
            }
        }
    }
    Ok(())
}

fn named_value(m: &PdaMachine, name: &str) -> Value {
    m.memory.iter().rev().find(|r| r.name == name).map_or_else(|| Value::text(name), as_value)
}
