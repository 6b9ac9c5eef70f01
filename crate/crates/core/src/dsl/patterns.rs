//! Pattern space o*: every slot layout an operation can derive.

use std::collections::BTreeSet;

use super::{DslError, DslSpec, OperationSchema, PatternSlot, ProgramPattern, RhsSymbol, SlotDescriptor, SymbolClass};

/// Upper bound on layouts per operation.
pub const MAX_PATTERNS: usize = 1 << 12;

/// A partial layout: parameter names with the condition they came through.
type Layout = Vec<(String, Option<String>)>;

/// The cached pattern space of `op`.
pub fn enumerate_patterns(op: &OperationSchema, spec: &DslSpec) -> Vec<ProgramPattern> {
    match spec.operation(&op.name) {
        Some(schema) => schema.patterns.clone(),
        None => op.patterns.clone(),
    }
}

pub(super) fn build_pattern_space(spec: &DslSpec, op: &str) -> Result<(Vec<SlotDescriptor>, Vec<ProgramPattern>), DslError> {
    let mut stack = vec![op.to_string()];
    let layouts = expand_variable(spec, op, None, &mut stack)?;

    let mut unique: Vec<Layout> = Vec::new();
    let mut seen = BTreeSet::new();
    for layout in layouts {
        let mut names = BTreeSet::new();
        for (n, _) in &layout {
            if !names.insert(n.clone()) {
                return Err(DslError::invalid(n, format!("slot appears twice in one layout of `{op}`")));
            }
        }
        if !satisfies_constraints(spec, op, &names) {
            continue;
        }
        if seen.insert(names) {
            unique.push(layout);
        }
    }
    if unique.is_empty() {
        return Err(DslError::invalid(op, "operation has no legal pattern"));
    }

    // slot universe in first-appearance order
    let mut slots: Vec<SlotDescriptor> = Vec::new();
    for layout in &unique {
        for (name, via) in layout {
            if slots.iter().any(|s| &s.name == name) {
                continue;
            }
            let param = spec.parameter(name).ok_or_else(|| DslError::invalid(name, "unknown parameter"))?;
            slots.push(SlotDescriptor {
                name: name.clone(),
                role: param.role,
                min_arity: param.min_arity,
                max_arity: param.max_arity,
                required: unique.iter().all(|l| l.iter().any(|(n, _)| n == name)),
                via: via.clone(),
            });
        }
    }

    let mut patterns: Vec<ProgramPattern> = unique
        .into_iter()
        .map(|layout| {
            // canonical slot order follows the universe order
            let mut names: Vec<&String> = layout.iter().map(|(n, _)| n).collect();
            names.sort_by_key(|n| slots.iter().position(|s| &s.name == *n));
            ProgramPattern {
                operation: op.to_string(),
                slot_layout: names
                    .into_iter()
                    .map(|n| PatternSlot { name: n.clone(), required: slots.iter().any(|s| &s.name == n && s.required) })
                    .collect(),
            }
        })
        .collect();
    patterns.sort_by(|a, b| {
        let ka: Vec<&str> = a.slot_names().collect();
        let kb: Vec<&str> = b.slot_names().collect();
        ka.cmp(&kb)
    });
    Ok((slots, patterns))
}

fn satisfies_constraints(spec: &DslSpec, op: &str, names: &BTreeSet<String>) -> bool {
    spec.semantics.constraints.iter().filter(|c| c.operation == op).all(|c| {
        let requires_ok = match c.requires.split_first() {
            Some((head, rest)) if names.contains(head) => rest.iter().all(|r| names.contains(r)),
            _ => true,
        };
        let excludes_ok = c.excludes.iter().filter(|e| names.contains(*e)).count() <= 1;
        requires_ok && excludes_ok
    })
}

fn expand_variable(spec: &DslSpec, var: &str, via: Option<&str>, stack: &mut Vec<String>) -> Result<Vec<Layout>, DslError> {
    let mut out = Vec::new();
    for prod in spec.productions_for(var) {
        for alt in prod.alternatives() {
            out.extend(expand_sequence(spec, &alt, via, stack)?);
            if out.len() > MAX_PATTERNS {
                return Err(DslError::invalid(var, format!("more than {MAX_PATTERNS} patterns")));
            }
        }
    }
    Ok(out)
}

fn expand_sequence(spec: &DslSpec, seq: &[RhsSymbol], via: Option<&str>, stack: &mut Vec<String>) -> Result<Vec<Layout>, DslError> {
    let mut acc: Vec<Layout> = vec![Vec::new()];
    for sym in seq {
        let mut options: Vec<Layout> = match spec.symbol_class(&sym.name) {
            Some(SymbolClass::Par) => vec![vec![(sym.name.clone(), via.map(str::to_string))]],
            Some(SymbolClass::Cond) => {
                if stack.contains(&sym.name) {
                    return Err(DslError::invalid(&sym.name, "recursive condition production"));
                }
                stack.push(sym.name.clone());
                let inner = expand_variable(spec, &sym.name, Some(&sym.name), stack)?;
                stack.pop();
                inner
            }
            _ => return Err(DslError::invalid(&sym.name, "operation productions may only name conditions and parameters")),
        };
        if sym.optional {
            options.push(Vec::new());
        }
        let mut next = Vec::with_capacity(acc.len() * options.len());
        for a in &acc {
            for o in &options {
                let mut l = a.clone();
                l.extend(o.iter().cloned());
                next.push(l);
            }
        }
        if next.len() > MAX_PATTERNS {
            return Err(DslError::invalid(&sym.name, format!("more than {MAX_PATTERNS} patterns")));
        }
        acc = next;
    }
    Ok(acc)
}
