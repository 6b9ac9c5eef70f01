//! Reagent lifecycles: reaching definitions run on a pushdown machine whose
//! memory is a random-access list of live reagent records.

mod complete;
mod link;
mod names;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use complete::{complete_parameters, complete_preconditions, complete_termination};
pub use link::link_program;
pub use names::{container_text, normalize_name, same_name};

use crate::dsl::{DslSpec, Effect, Role};
use crate::extractor::{ExtractorError, ExtractorGateway, InstructionRecord};
use crate::program::{ControlKind, DslProgram, Instruction, Product, ReviewFlag, Stage, Value};
use crate::units::{Dimension, Magnitude, Quantity};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("flow stage, instruction {index}: `{op}` is not enabled in the current state")]
    IllegalTransition { index: usize, op: String },
    #[error("flow stage, instruction {index}: {source}")]
    Extraction { index: usize, source: ExtractorError },
    #[error("flow stage: output choice for instruction {index} needs at least one candidate")]
    NoCandidates { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordOrigin {
    /// A raw reagent named in the protocol text.
    Source,
    /// Produced by an instruction (emit or naming convention).
    Emitted,
}

/// One live reagent in machine memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReagentRecord {
    /// Unique lifecycle identifier.
    pub id: String,
    /// Name as written or emitted.
    pub name: String,
    pub defined_at: usize,
    pub origin: RecordOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantity: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<String>,
}

/// What one transition did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEffect {
    pub kills: Vec<String>,
    pub defines: Vec<String>,
    pub mutates: Vec<String>,
    /// Reagent references that matched nothing in memory.
    pub unresolved: Vec<String>,
}

impl StepEffect {
    /// In(o): everything the instruction consumes or works on.
    pub fn inputs(&self) -> BTreeSet<&str> {
        self.kills.iter().chain(&self.mutates).map(String::as_str).collect()
    }

    /// Out(o): everything the instruction leaves behind for its successors.
    pub fn outputs(&self) -> BTreeSet<&str> {
        self.defines.iter().chain(&self.mutates).map(String::as_str).collect()
    }

    fn absorb(&mut self, other: StepEffect) {
        for (mine, theirs) in [
            (&mut self.kills, other.kills),
            (&mut self.defines, other.defines),
            (&mut self.mutates, other.mutates),
            (&mut self.unresolved, other.unresolved),
        ] {
            for x in theirs {
                if !mine.contains(&x) {
                    mine.push(x);
                }
            }
        }
    }
}

/// M = (Q, Σ, Γ, δ, q0, Z, F) over one program. Q and Σ are the program's
/// instructions and operation names, δ is [`PdaMachine::transition`], the
/// empty memory plays the role of Z, and F is "memory empty" once the
/// declared product has been handed out.
#[derive(Debug, Clone, PartialEq)]
pub struct PdaMachine {
    /// Σ: distinct operation names in program order.
    pub alphabet: Vec<String>,
    /// q0: the first instruction, if any.
    pub initial: Option<usize>,
    /// Current state q: the last instruction taken.
    pub state: Option<usize>,
    /// M(q): instructions that may run next.
    pub enabled: BTreeSet<usize>,
    /// Γ*: live reagents, oldest first.
    pub memory: Vec<ReagentRecord>,
    successors: Vec<BTreeSet<usize>>,
    /// Killed record id to the record it was absorbed into.
    lineage: BTreeMap<String, String>,
    used_ids: BTreeSet<String>,
    emits: BTreeSet<String>,
    fresh: BTreeMap<String, usize>,
    /// Every record ever created, in creation order.
    pub(crate) created: Vec<ReagentRecord>,
    /// Normalized names live on some but not all paths into the current state.
    pub(crate) partial: BTreeSet<String>,
}

fn entry_set(k: usize, program: &DslProgram) -> BTreeSet<usize> {
    let mut out = BTreeSet::from([k]);
    for c in program.controls.iter().filter(|c| c.kind == ControlKind::Branch && c.start == k) {
        out.extend(entry_set(c.end + 1, program));
    }
    out
}

impl PdaMachine {
    pub fn new(program: &DslProgram) -> Self {
        let n = program.instructions.len();
        let mut alphabet: Vec<String> = Vec::new();
        for i in &program.instructions {
            if !alphabet.contains(&i.op) {
                alphabet.push(i.op.clone());
            }
        }
        let successors = (0..n)
            .map(|i| {
                let mut next = entry_set(i + 1, program);
                for c in program.controls.iter().filter(|c| c.kind == ControlKind::Loop && c.end == i) {
                    next.extend(entry_set(c.start, program));
                }
                next.retain(|&k| k < n);
                next
            })
            .collect();
        let mut enabled = if n == 0 { BTreeSet::new() } else { entry_set(0, program) };
        enabled.retain(|&k| k < n);
        let emits =
            program.instructions.iter().flat_map(|i| i.bindings.iter()).filter(|b| b.slot == "emit").map(|b| b.value.plain()).collect();
        PdaMachine {
            alphabet,
            initial: (n > 0).then_some(0),
            state: None,
            enabled,
            memory: Vec::new(),
            successors,
            lineage: BTreeMap::new(),
            used_ids: BTreeSet::new(),
            emits,
            fresh: BTreeMap::new(),
            created: Vec::new(),
            partial: BTreeSet::new(),
        }
    }

    /// Accepting condition: nothing left in memory.
    pub fn accepts(&self) -> bool {
        self.memory.is_empty()
    }

    /// Live records whose name matches `name` after normalization, newest first.
    pub fn lookup(&self, name: &str) -> Vec<&ReagentRecord> {
        let key = normalize_name(name);
        self.memory.iter().rev().filter(|r| names::same_name(&normalize_name(&r.name), &key)).collect()
    }

    fn in_container(&self, container: &str) -> Vec<&ReagentRecord> {
        self.memory.iter().filter(|r| r.container.as_deref() == Some(container)).collect()
    }

    /// Follow absorptions from a consumed record to whatever now carries it.
    fn successor_of(&self, name: &str) -> Option<&ReagentRecord> {
        // ids are the name, optionally suffixed with @index
        let mut id = self.lineage.keys().rev().find(|k| k.split('@').next() == Some(name))?.clone();
        let mut hops = 0;
        while let Some(next) = self.lineage.get(&id) {
            if let Some(r) = self.memory.iter().find(|r| &r.id == next) {
                return Some(r);
            }
            id = next.clone();
            hops += 1;
            if hops > self.lineage.len() {
                break;
            }
        }
        None
    }

    fn fresh_id(&mut self, name: &str, index: usize) -> String {
        let mut id = name.to_string();
        let mut k = 1;
        if self.used_ids.contains(&id) {
            id = format!("{name}@{index}");
        }
        while self.used_ids.contains(&id) {
            k += 1;
            id = format!("{name}@{index}.{k}");
        }
        self.used_ids.insert(id.clone());
        id
    }

    /// Next name for the `stem` convention that no explicit emit uses.
    fn fresh_name(&mut self, stem: &str) -> String {
        loop {
            let n = self.fresh.entry(stem.to_string()).or_insert(0);
            *n += 1;
            let name = format!("{stem}_{n}");
            if !self.emits.contains(&name) {
                return name;
            }
        }
    }

    /// δ: run instruction `index`.
    pub fn transition(
        &mut self,
        index: usize,
        instr: &Instruction,
        spec: &DslSpec,
        gateway: &ExtractorGateway,
    ) -> Result<StepEffect, FlowError> {
        if !self.enabled.contains(&index) {
            return Err(FlowError::IllegalTransition { index, op: instr.op.clone() });
        }
        let effect = self.apply(index, instr, spec, gateway)?;
        self.state = Some(index);
        self.enabled = self.successors.get(index).cloned().unwrap_or_default();
        Ok(effect)
    }

    /// Jump to `index` regardless of enabledness (used for structured traversal).
    pub(crate) fn force(&mut self, index: usize) {
        self.enabled.insert(index);
    }

    fn apply(&mut self, index: usize, instr: &Instruction, spec: &DslSpec, gateway: &ExtractorGateway) -> Result<StepEffect, FlowError> {
        let plan = self.plan(index, instr, spec, gateway)?;
        let mut effect = StepEffect { unresolved: plan.unresolved.clone(), ..Default::default() };
        let killed: Vec<ReagentRecord> = self.memory.iter().filter(|r| plan.kills.contains(&r.id)).cloned().collect();
        self.memory.retain(|r| !plan.kills.contains(&r.id));
        effect.kills = killed.iter().map(|r| r.id.clone()).collect();
        effect.mutates = plan.mutates.clone();
        let total = sum_volumes(killed.iter().filter_map(|r| r.quantity.as_ref()));
        let share = plan.defines.len().max(1) as f64;
        for d in &plan.defines {
            self.partial.remove(&normalize_name(&d.name));
            // redefining a live name supersedes it
            self.memory.retain(|r| !(r.origin == RecordOrigin::Emitted && r.name == d.name && !effect.defines.contains(&r.id)));
            let id = self.fresh_id(&d.name, index);
            let quantity = d.quantity.clone().or_else(|| total.as_ref().map(|q| scale(q, 1.0 / share)));
            let record = ReagentRecord {
                id: id.clone(),
                name: d.name.clone(),
                defined_at: index,
                origin: d.origin,
                quantity,
                container: d.container.clone(),
            };
            self.created.push(record.clone());
            self.memory.push(record);
            effect.defines.push(id);
        }
        if let [only] = effect.defines.as_slice() {
            for k in &killed {
                self.lineage.insert(k.id.clone(), only.clone());
            }
        }
        Ok(effect)
    }

    /// Decide kills, defines and mutations without touching memory (except
    /// registering raw reagents on first appearance).
    fn plan(&mut self, index: usize, instr: &Instruction, spec: &DslSpec, gateway: &ExtractorGateway) -> Result<Plan, FlowError> {
        let mut plan = Plan::default();
        let Some(op) = spec.operation(&instr.op) else { return Ok(plan) };
        let bound_container = instr.get("container").filter(|v| !v.is_unresolved()).map(Value::plain);
        let amount = instr
            .bindings
            .iter()
            .filter(|b| {
                spec.parameter(spec.canonical_slot(&b.slot)).is_some_and(|p| matches!(p.unit, Some(Dimension::Volume | Dimension::Mass)))
            })
            .find_map(|b| match &b.value {
                Value::Quantity(q) => Some(q.clone()),
                _ => None,
            });

        let mut targets: Vec<String> = Vec::new();
        let mut target_container: Option<String> = None;
        let mut inputs: Vec<String> = Vec::new();
        let mut destinations: Vec<String> = Vec::new();
        let mut pending_sources: Vec<(String, Role)> = Vec::new();
        let mut missing = 0usize;

        for b in &instr.bindings {
            let name = spec.canonical_slot(&b.slot);
            let Some(slot) = op.slot(name) else { continue };
            if !matches!(slot.role, Role::Input | Role::Target | Role::Destination) {
                continue;
            }
            for item in b.value.items() {
                match (slot.role, item) {
                    (_, Value::Missing | Value::Mask) => missing += 1,
                    (Role::Destination, v) => destinations.push(container_text(&v.plain(), spec).unwrap_or_else(|| v.plain())),
                    (role, Value::Text(t)) => {
                        if let Some(c) = container_text(t, spec) {
                            if role == Role::Target {
                                targets.extend(self.in_container(&c).iter().map(|r| r.id.clone()));
                                target_container = Some(c);
                            }
                            continue;
                        }
                        // every live record under the newest hit's name: after a branch join one per path
                        let found = self.lookup(t);
                        let hits: Vec<String> =
                            found.iter().filter(|r| Some(&r.name) == found.first().map(|f| &f.name)).map(|r| r.id.clone()).collect();
                        if hits.is_empty() {
                            pending_sources.push((t.clone(), role));
                            continue;
                        }
                        if self.partial.contains(&normalize_name(t)) {
                            // absent on some incoming path: enters there as raw
                            pending_sources.push((t.clone(), role));
                        }
                        if role == Role::Target {
                            targets.extend(hits);
                        } else {
                            inputs.extend(hits);
                        }
                    }
                    (role, Value::Symbol(s)) => {
                        let live: Vec<String> = self.lookup(s).iter().filter(|r| r.name == *s).map(|r| r.id.clone()).collect();
                        let live = if live.is_empty() { self.lookup(s).iter().take(1).map(|r| r.id.clone()).collect() } else { live };
                        if !live.is_empty() {
                            if role == Role::Target {
                                targets.extend(live);
                            } else {
                                inputs.extend(live);
                            }
                        } else if !self.in_container(s).is_empty() {
                            if role == Role::Target {
                                targets.extend(self.in_container(s).iter().map(|r| r.id.clone()));
                                target_container = Some(s.clone());
                            }
                        } else if op.effect == Effect::Mutate && role == Role::Target {
                            // a stale name still denotes whatever absorbed it
                            match self.successor_of(s) {
                                Some(r) => targets.push(r.id.clone()),
                                None => plan.unresolved.push(s.clone()),
                            }
                        } else if names::looks_like_vessel(s, spec) {
                            if role == Role::Target {
                                target_container = Some(s.clone());
                            }
                        } else {
                            plan.unresolved.push(s.clone());
                        }
                    }
                    (_, v) => plan.unresolved.push(v.plain()),
                }
            }
        }

        if missing > 0 && !self.memory.is_empty() {
            let record = instruction_record(instr, spec);
            let candidates: Vec<String> = self.memory.iter().map(|r| r.name.clone()).collect();
            let picked = gateway.query_missing_reagents(&record, &candidates).map_err(|source| FlowError::Extraction { index, source })?;
            for name in picked {
                if let Some(r) = self.memory.iter().rev().find(|r| r.name == name) {
                    if !targets.contains(&r.id) && !inputs.contains(&r.id) {
                        inputs.push(r.id.clone());
                    }
                }
            }
        }

        let record_container = |ids: &[String], memory: &[ReagentRecord]| {
            ids.iter().find_map(|id| memory.iter().find(|r| &r.id == id).and_then(|r| r.container.clone()))
        };
        let here = bound_container
            .clone()
            .or_else(|| target_container.clone())
            .or_else(|| record_container(&targets, &self.memory))
            .or_else(|| record_container(&inputs, &self.memory));

        for (name, _) in &pending_sources {
            self.partial.remove(&normalize_name(name));
        }
        // raw reagents enter memory on first appearance
        let single_source = pending_sources.len() == 1;
        for (name, role) in pending_sources {
            let id = self.fresh_id(&normalize_name(&name), index);
            let quantity = if single_source && role == Role::Input { amount.clone() } else { None };
            let record =
                ReagentRecord { id: id.clone(), name, defined_at: index, origin: RecordOrigin::Source, quantity, container: here.clone() };
            self.created.push(record.clone());
            self.memory.push(record);
            if role == Role::Target {
                targets.push(id);
            } else {
                inputs.push(id);
            }
        }

        let emit = instr.get("emit").filter(|v| !v.is_unresolved()).map(Value::plain);
        match op.effect {
            Effect::Combine => {
                plan.kills.extend(inputs.iter().cloned());
                let output = emit.or_else(|| op.produces.as_ref().map(|stem| self.fresh_name(stem)));
                match output {
                    Some(name) => {
                        plan.kills.extend(targets.iter().cloned());
                        plan.defines.push(Define { name, origin: RecordOrigin::Emitted, container: here, quantity: None });
                    }
                    // the target carries on under its own name
                    None => plan.mutates.extend(targets.iter().cloned()),
                }
            }
            Effect::Mutate => {
                plan.kills.extend(inputs.iter().cloned());
                match emit {
                    Some(name) => {
                        plan.kills.extend(targets.iter().cloned());
                        plan.defines.push(Define { name, origin: RecordOrigin::Emitted, container: here, quantity: None });
                    }
                    None => plan.mutates.extend(targets.iter().cloned()),
                }
            }
            Effect::Move => {
                plan.kills.extend(targets.iter().cloned());
                plan.kills.extend(inputs.iter().cloned());
                let base = emit.or_else(|| targets.first().and_then(|id| self.memory.iter().find(|r| &r.id == id)).map(|r| r.name.clone()));
                if let Some(name) = base {
                    let parts = match instr.get("parts") {
                        Some(Value::Quantity(q)) => q.magnitude.hi().round().max(1.0) as usize,
                        _ => 1,
                    };
                    if parts > 1 && destinations.len() < parts {
                        // "equally into 2 flasks": numbered copies of the destination
                        let base = destinations.first().cloned().or_else(|| here.clone()).unwrap_or_else(|| "part".into());
                        let base = match base.strip_suffix('s') {
                            Some(one) if spec.vocabulary("container").iter().any(|c| c == one) => one.to_string(),
                            _ => base,
                        };
                        destinations = (1..=parts).map(|k| format!("{base} {k}")).collect();
                    }
                    let dests: Vec<Option<String>> =
                        if destinations.is_empty() { vec![here] } else { destinations.into_iter().map(Some).collect() };
                    for container in dests {
                        plan.defines.push(Define { name: name.clone(), origin: RecordOrigin::Emitted, container, quantity: None });
                    }
                }
            }
            Effect::Consume => {
                plan.kills.extend(targets.iter().cloned());
                plan.kills.extend(inputs.iter().cloned());
            }
            Effect::None => {}
        }
        plan.kills.dedup();
        Ok(plan)
    }
}

#[derive(Debug, Default)]
struct Plan {
    kills: Vec<String>,
    defines: Vec<Define>,
    mutates: Vec<String>,
    unresolved: Vec<String>,
}

#[derive(Debug)]
struct Define {
    name: String,
    origin: RecordOrigin,
    container: Option<String>,
    quantity: Option<Quantity>,
}

fn sum_volumes<'a>(qs: impl Iterator<Item = &'a Quantity>) -> Option<Quantity> {
    let (mut lo, mut hi) = (0.0, 0.0);
    let mut any = false;
    for q in qs {
        if q.dimension() == Dimension::Volume {
            let m = q.to_base();
            lo += m.lo();
            hi += m.hi();
            any = true;
        }
    }
    any.then(|| if lo == hi { Quantity::scalar(lo, "mL") } else { Quantity::range(lo, hi, "mL") })
}

fn scale(q: &Quantity, f: f64) -> Quantity {
    let magnitude = match q.magnitude {
        Magnitude::Scalar(v) => Magnitude::Scalar(v * f),
        Magnitude::Range(a, b) => Magnitude::Range(a * f, b * f),
    };
    Quantity { magnitude, unit: q.unit.clone() }
}

/// The instruction as the service sees it: reagent slots only, empty strings for gaps.
pub fn instruction_record(instr: &Instruction, spec: &DslSpec) -> InstructionRecord {
    let mut record = InstructionRecord::new(&instr.op);
    let op = spec.operation(&instr.op);
    for b in &instr.bindings {
        let name = spec.canonical_slot(&b.slot);
        let role = op.and_then(|o| o.slot(name)).map(|s| s.role);
        match role {
            Some(Role::Output) => record.output = b.value.plain(),
            Some(Role::Input | Role::Target | Role::Destination) => {
                let values: Vec<String> =
                    b.value.items().iter().map(|v| if v.is_unresolved() { String::new() } else { v.plain() }).collect();
                record.params.push((name.to_string(), values));
            }
            _ => {}
        }
    }
    record
}

/// Reagent names defined by `instr`: Out(o) under the emit-or-convention rule.
/// `ordinal` numbers the fresh intermediate when no emit is bound.
pub fn defines(instr: &Instruction, spec: &DslSpec, ordinal: usize) -> Vec<String> {
    let Some(op) = spec.operation(&instr.op) else { return Vec::new() };
    let emit = instr.get("emit").filter(|v| !v.is_unresolved()).map(Value::plain);
    match op.effect {
        Effect::Combine => emit.or_else(|| op.produces.as_ref().map(|s| format!("{s}_{ordinal}"))).into_iter().collect(),
        Effect::Mutate | Effect::Move => emit.into_iter().collect(),
        Effect::Consume | Effect::None => Vec::new(),
    }
}

/// Ids of memory records `instr` would consume, with gateway help for empty slots.
pub fn kills(memory: &[ReagentRecord], instr: &Instruction, spec: &DslSpec, gateway: &ExtractorGateway) -> Result<Vec<String>, FlowError> {
    let single = DslProgram::new(vec![instr.clone()]);
    let mut m = PdaMachine::new(&single);
    m.memory = memory.to_vec();
    m.used_ids = memory.iter().map(|r| r.id.clone()).collect();
    let before: BTreeSet<String> = m.used_ids.clone();
    let plan = m.plan(0, instr, spec, gateway)?;
    Ok(plan.kills.into_iter().filter(|k| before.contains(k)).collect())
}

/// The candidate naming what `instr` produces; rule backend picks by name overlap.
pub fn resolve_output(
    index: usize,
    instr: &Instruction,
    candidates: &[String],
    spec: &DslSpec,
    gateway: &ExtractorGateway,
) -> Result<String, FlowError> {
    let record = instruction_record(instr, spec);
    gateway
        .query_output(&record, candidates)
        .map_err(|source| FlowError::Extraction { index, source })?
        .ok_or(FlowError::NoCandidates { index })
}

/// One reagent from definition to consumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lifecycle {
    pub id: String,
    pub name: String,
    pub origin: RecordOrigin,
    pub defined_at: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub killed_at: Option<usize>,
    /// Kills on other paths (branch joins keep both alternatives alive).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternate_kills: Vec<usize>,
    /// Handed out as the protocol's product.
    #[serde(default)]
    pub terminal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantity: Option<Quantity>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReagentFlowGraph {
    pub reagents: Vec<Lifecycle>,
    /// R: (definer, killer) instruction pairs.
    pub dependences: BTreeSet<(usize, usize)>,
    /// Per instruction, union over traversals.
    pub steps: Vec<StepEffect>,
    pub accept: bool,
    /// Names of reagents alive at the end that are not the product.
    pub dangling: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<ReviewFlag>,
}

impl ReagentFlowGraph {
    pub fn reagent(&self, id: &str) -> Option<&Lifecycle> {
        self.reagents.iter().find(|r| r.id == id)
    }
}

struct Analyzer<'a> {
    program: &'a DslProgram,
    spec: &'a DslSpec,
    gateway: &'a ExtractorGateway,
    machine: PdaMachine,
    graph: ReagentFlowGraph,
    /// Record id to its position in `graph.reagents`.
    slots: BTreeMap<String, usize>,
}

impl Analyzer<'_> {
    fn run_range(&mut self, start: usize, end: usize) -> Result<(), FlowError> {
        let mut i = start;
        while i <= end && i < self.program.instructions.len() {
            // outermost block opening here
            let block = self
                .program
                .controls
                .iter()
                .filter(|c| c.start == i && c.end <= end && !(c.start == start && c.end == end && self.inside(c)))
                .max_by_key(|c| c.end)
                .cloned();
            match block {
                Some(c) => {
                    self.enter(&c)?;
                    i = c.end + 1;
                }
                None => {
                    self.exec(i)?;
                    i += 1;
                }
            }
        }
        Ok(())
    }

    fn inside(&self, _c: &crate::program::ControlBlock) -> bool {
        false
    }

    fn enter(&mut self, c: &crate::program::ControlBlock) -> Result<(), FlowError> {
        let inner: Vec<_> = self.program.controls.iter().filter(|d| *d != c && d.start >= c.start && d.end <= c.end).cloned().collect();
        let run_body = |this: &mut Self| -> Result<(), FlowError> {
            let mut i = c.start;
            while i <= c.end {
                let block = inner.iter().filter(|d| d.start == i).max_by_key(|d| d.end).cloned();
                match block {
                    Some(d) if !(d.start == c.start && d.end == c.end) => {
                        this.enter(&d)?;
                        i = d.end + 1;
                    }
                    _ => {
                        this.exec(i)?;
                        i += 1;
                    }
                }
            }
            Ok(())
        };
        match c.kind {
            ControlKind::Loop => {
                let times = c.count.unwrap_or(1).max(1);
                for k in 0..times {
                    if k > 0 {
                        self.machine.force(c.start);
                    }
                    run_body(self)?;
                }
                Ok(())
            }
            ControlKind::Branch => {
                let skipped = self.machine.memory.clone();
                let lineage = self.machine.lineage.clone();
                let partial = self.machine.partial.clone();
                run_body(self)?;
                let names = |m: &[ReagentRecord]| m.iter().map(|r| normalize_name(&r.name)).collect::<BTreeSet<_>>();
                let (taken, kept) = (names(&self.machine.memory), names(&skipped));
                let joined: BTreeSet<String> = taken.union(&kept).cloned().collect();
                self.machine.partial.extend(partial);
                self.machine.partial.extend(taken.symmetric_difference(&kept).cloned());
                self.machine.partial.retain(|n| joined.contains(n));
                // may-reach join: keep what survives on either path
                for r in skipped {
                    if !self.machine.memory.iter().any(|m| m.id == r.id) {
                        self.machine.memory.push(r);
                    }
                }
                self.machine.memory.sort_by(|a, b| (a.defined_at, &a.id).cmp(&(b.defined_at, &b.id)));
                for (k, v) in lineage {
                    self.machine.lineage.entry(k).or_insert(v);
                }
                self.machine.force(c.end + 1);
                Ok(())
            }
        }
    }

    fn exec(&mut self, i: usize) -> Result<(), FlowError> {
        let instr = &self.program.instructions[i];
        self.machine.force(i);
        let effect = self.machine.transition(i, instr, self.spec, self.gateway)?;
        for r in &self.machine.created[self.graph.reagents.len()..] {
            self.slots.insert(r.id.clone(), self.graph.reagents.len());
            self.graph.reagents.push(Lifecycle {
                id: r.id.clone(),
                name: r.name.clone(),
                origin: r.origin,
                defined_at: r.defined_at,
                killed_at: None,
                alternate_kills: Vec::new(),
                terminal: false,
                container: r.container.clone(),
                quantity: r.quantity.clone(),
            });
        }
        for id in &effect.kills {
            let Some(l) = self.slots.get(id).map(|&k| &mut self.graph.reagents[k]) else { continue };
            match l.killed_at {
                None => l.killed_at = Some(i),
                Some(k) if k != i && !l.alternate_kills.contains(&i) => l.alternate_kills.push(i),
                _ => {}
            }
            if l.defined_at != i {
                self.graph.dependences.insert((l.defined_at, i));
            }
        }
        for u in &effect.unresolved {
            let reason = format!("reagent `{u}` is not alive here");
            if !self.graph.flags.iter().any(|f| f.instruction == Some(i) && f.reason == reason) {
                self.graph.flags.push(ReviewFlag {
                    stage: Stage::Flow,
                    step: instr.origin.map(|o| o.step),
                    instruction: Some(i),
                    parameter: None,
                    reason,
                });
            }
        }
        self.graph.steps[i].absorb(effect);
        Ok(())
    }

    fn finish(mut self) -> ReagentFlowGraph {
        let n = self.program.instructions.len();
        self.graph.reagents.sort_by_key(|l| l.defined_at);
        let product: Vec<String> = match &self.program.product {
            Some(Product::Servings(_)) => self.machine.memory.iter().map(|r| r.id.clone()).collect(),
            Some(Product::Reagent(name)) => {
                let key = normalize_name(name);
                let hits: Vec<String> =
                    self.machine.memory.iter().filter(|r| names::same_name(&normalize_name(&r.name), &key)).map(|r| r.id.clone()).collect();
                if hits.is_empty() {
                    self.graph.flags.push(ReviewFlag {
                        stage: Stage::Flow,
                        step: None,
                        instruction: None,
                        parameter: None,
                        reason: format!("declared product `{name}` is never produced"),
                    });
                }
                hits
            }
            None => match n.checked_sub(1) {
                Some(last) => self.graph.steps[last].outputs().into_iter().map(str::to_string).collect(),
                None => Vec::new(),
            },
        };
        let product_missing = matches!(self.program.product, Some(Product::Reagent(_))) && product.is_empty();
        for id in &product {
            if let Some(l) = self.graph.reagents.iter_mut().find(|l| &l.id == id) {
                l.terminal = true;
            }
        }
        self.machine.memory.retain(|r| !product.contains(&r.id));
        self.graph.dangling = self.machine.memory.iter().map(|r| r.name.clone()).collect();
        self.graph.accept = self.machine.accepts() && !product_missing;
        self.graph
    }
}

/// FLOW: traverse `program` in execution order, recording define/kill events.
pub fn analyze_flow(program: &DslProgram, spec: &DslSpec, gateway: &ExtractorGateway) -> Result<ReagentFlowGraph, FlowError> {
    let n = program.instructions.len();
    let mut a = Analyzer {
        program,
        spec,
        gateway,
        machine: PdaMachine::new(program),
        graph: ReagentFlowGraph { steps: vec![StepEffect::default(); n], ..Default::default() },
        slots: BTreeMap::new(),
    };
    if n > 0 {
        a.run_range(0, n - 1)?;
    }
    Ok(a.finish())
}

/// Share of adjacent instruction pairs where the second works on what the first left behind.
pub fn locality_statistic(graph: &ReagentFlowGraph, program: &DslProgram) -> f64 {
    let n = program.instructions.len().min(graph.steps.len());
    if n < 2 {
        return 1.0;
    }
    let linked = (0..n - 1).filter(|&i| !graph.steps[i].outputs().is_disjoint(&graph.steps[i + 1].inputs())).count();
    linked as f64 / (n - 1) as f64
}

#[cfg(test)]
mod tests;
