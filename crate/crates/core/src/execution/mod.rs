//! Constraint-based execution model: simulate traces over a program and its
//! dependence graph, track container volumes and check safety rules.

pub mod declarations;
pub mod guard;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use declarations::{compile_rules, CompiledRule, Declarations, ResourceDeclarations, SafetyRule, Severity};
pub use guard::{parse_guard, Guard, GuardScope};
pub use report::SimulationReport;

use crate::dsl::{validate_program, DslSpec};
use crate::extractor::ExtractorGateway;
use crate::flow::{analyze_flow, FlowError, PdaMachine};
use crate::pdg::{build_pdg, EdgeKind, Pdg, PdgError};
use crate::program::{ControlKind, DslProgram, Instruction, Value};
use crate::units::{Dimension, Magnitude};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecutionError {
    #[error("execution stage: rule `{rule}` does not compile: {reason}")]
    RuleCompile { rule: String, reason: String },
    #[error("execution stage: no instruction is enabled after {done} of {total} steps")]
    StuckExecution { done: usize, total: usize },
    #[error("execution stage: invalid edit: {0}")]
    InvalidEdit(String),
    #[error("execution stage: declarations: {0}")]
    Declarations(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Pdg(#[from] PdgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintKind {
    #[serde(rename = "C_op")]
    Order,
    #[serde(rename = "C_reg")]
    Flow,
    #[serde(rename = "C_s")]
    Spatial,
    #[serde(rename = "C_t")]
    Temporal,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::Order => "C_op",
            ConstraintKind::Flow => "C_reg",
            ConstraintKind::Spatial => "C_s",
            ConstraintKind::Temporal => "C_t",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// `after` may only run once `before` has run.
    Order { before: usize, after: usize },
    /// `killer` consumes `reagent`, which `definer` must have produced.
    Flow { definer: usize, killer: usize, reagent: String },
    /// Declared container bound.
    Capacity { container: String, capacity_ml: f64 },
    /// Index into the model's rules.
    Safety { rule: usize },
}

impl Constraint {
    pub fn kind(&self) -> ConstraintKind {
        match self {
            Constraint::Order { .. } => ConstraintKind::Order,
            Constraint::Flow { .. } => ConstraintKind::Flow,
            Constraint::Capacity { .. } => ConstraintKind::Spatial,
            Constraint::Safety { .. } => ConstraintKind::Temporal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionModel {
    pub program: DslProgram,
    pub spec: DslSpec,
    pub pdg: Pdg,
    pub resources: ResourceDeclarations,
    pub rules: Vec<CompiledRule>,
    pub constraints: Vec<Constraint>,
}

impl ExecutionModel {
    pub fn constraints_of(&self, kind: ConstraintKind) -> impl Iterator<Item = &Constraint> {
        self.constraints.iter().filter(move |c| c.kind() == kind)
    }
}

/// S = (p, C): order constraints from the op graph, flow constraints from
/// the reagent dependences, one capacity bound per declared container and
/// one temporal constraint per rule.
pub fn make_model(
    program: &DslProgram,
    pdg: &Pdg,
    rules: &[SafetyRule],
    resources: &ResourceDeclarations,
    spec: &DslSpec,
) -> Result<ExecutionModel, ExecutionError> {
    let compiled = compile_rules(rules, resources)?;
    let mut constraints = Vec::new();
    let mut seen = BTreeSet::new();
    // backward edges are loop-carried and hold on a later iteration
    for e in pdg.op_edges.iter().filter(|e| e.kind != EdgeKind::Loop && e.from < e.to) {
        if seen.insert((e.from, e.to)) {
            constraints.push(Constraint::Order { before: e.from, after: e.to });
        }
        if let Some(r) = e.reagent.as_ref().filter(|_| !e.alternate) {
            constraints.push(Constraint::Flow { definer: e.from, killer: e.to, reagent: r.clone() });
        }
    }
    for (container, capacity_ml) in &resources.containers {
        constraints.push(Constraint::Capacity { container: container.clone(), capacity_ml: *capacity_ml });
    }
    for rule in 0..compiled.len() {
        constraints.push(Constraint::Safety { rule });
    }
    Ok(ExecutionModel {
        program: program.clone(),
        spec: spec.clone(),
        pdg: pdg.clone(),
        resources: resources.clone(),
        rules: compiled,
        constraints,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContainerState {
    pub volume_ml: f64,
    /// Upper end when some volume is a range.
    pub volume_max_ml: f64,
    pub contents: BTreeSet<String>,
    pub attributes: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionContext {
    pub containers: BTreeMap<String, ContainerState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_c: Option<f64>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub instruction: usize,
    pub op: String,
    /// Container the instruction works in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<String>,
    /// Quantity parameters in base units as [low, high].
    pub params: BTreeMap<String, [f64; 2]>,
    /// Volume entering from outside (new raw reagents), in mL.
    pub added_ml: f64,
    pub context: ExecutionContext,
}

impl TraceStep {
    fn magnitudes(&self) -> BTreeMap<String, Magnitude> {
        self.params
            .iter()
            .map(|(k, [lo, hi])| (k.clone(), if lo == hi { Magnitude::Scalar(*lo) } else { Magnitude::Range(*lo, *hi) }))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub seed: u64,
    pub steps: Vec<TraceStep>,
    /// Simplifications made while simulating (unrolled loops, unitless amounts).
    pub assumptions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ConstraintKind,
    /// Position in the trace.
    pub step: usize,
    pub instruction: usize,
    /// Container, rule or reagent the constraint is about.
    pub subject: String,
    pub reason: String,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ExecutionContext>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {} (instruction {}) {} `{}`: {}", self.step + 1, self.instruction, self.kind, self.subject, self.reason)
    }
}

/// Instruction order honoring every non-loop op edge, ties by index.
fn topological_order(model: &ExecutionModel) -> Result<Vec<usize>, ExecutionError> {
    let n = model.program.instructions.len();
    let mut indegree = vec![0usize; n];
    let mut next: Vec<Vec<usize>> = vec![Vec::new(); n];
    for c in model.constraints_of(ConstraintKind::Order) {
        if let Constraint::Order { before, after } = c {
            if *before < n && *after < n {
                indegree[*after] += 1;
                next[*before].push(*after);
            }
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &j in &next[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.insert(j);
            }
        }
    }
    if order.len() < n {
        return Err(ExecutionError::StuckExecution { done: order.len(), total: n });
    }
    Ok(order)
}

/// Unroll loops over a contiguous order: bounded loops run their count,
/// unbounded ones once.
fn unroll(order: &[usize], program: &DslProgram, assumptions: &mut Vec<String>) -> Vec<usize> {
    let contiguous = order.iter().enumerate().all(|(k, &i)| k == i);
    if !contiguous {
        if !program.controls.is_empty() {
            assumptions.push("loops run once: the instruction order is not the listing order".into());
        }
        return order.to_vec();
    }
    fn expand(start: usize, end: usize, program: &DslProgram, skip: Option<usize>, out: &mut Vec<usize>, notes: &mut Vec<String>) {
        let mut i = start;
        while i <= end {
            let block = program
                .controls
                .iter()
                .enumerate()
                .filter(|(k, c)| Some(*k) != skip && c.kind == ControlKind::Loop && c.start == i && c.end <= end)
                .max_by_key(|(_, c)| c.end);
            match block {
                Some((k, c)) => {
                    let times = match c.count {
                        Some(n) => n.max(1),
                        None => {
                            let note = format!("unbounded loop over instructions {}..={} runs once", c.start, c.end);
                            if !notes.contains(&note) {
                                notes.push(note);
                            }
                            1
                        }
                    };
                    for _ in 0..times {
                        expand(c.start, c.end, program, Some(k), out, notes);
                    }
                    i = c.end + 1;
                }
                None => {
                    out.push(i);
                    i += 1;
                }
            }
        }
    }
    let mut out = Vec::new();
    if let Some(&last) = order.last() {
        expand(0, last, program, None, &mut out, assumptions);
    }
    out
}

fn quantity_params(instr: &Instruction, spec: &DslSpec) -> BTreeMap<String, [f64; 2]> {
    instr
        .bindings
        .iter()
        .filter_map(|b| match &b.value {
            Value::Quantity(q) => {
                let m = q.to_base();
                Some((spec.canonical_slot(&b.slot).to_string(), [m.lo(), m.hi()]))
            }
            _ => None,
        })
        .collect()
}

struct Simulator<'a> {
    model: &'a ExecutionModel,
    gateway: ExtractorGateway,
    machine: PdaMachine,
    /// Record id to the raw reagents it is made of.
    constituents: BTreeMap<String, BTreeSet<String>>,
    trace: ExecutionTrace,
    violations: Vec<Violation>,
    done: BTreeSet<usize>,
    alive_before: BTreeSet<String>,
}

impl Simulator<'_> {
    fn step(&mut self, i: usize) -> Result<(), ExecutionError> {
        let model = self.model;
        let instr = &model.program.instructions[i];
        let pos = self.trace.steps.len();
        self.alive_before = self.machine.memory.iter().map(|r| r.id.clone()).collect();
        let before = self.machine.created.len();

        // order and flow constraints look at what already ran
        for c in &model.constraints {
            match c {
                Constraint::Order { before: b, after } if *after == i && !self.done.contains(b) => self.violations.push(Violation {
                    kind: ConstraintKind::Order,
                    step: pos,
                    instruction: i,
                    subject: format!("{b} -> {i}"),
                    reason: format!("instruction {i} runs before instruction {b}"),
                    severity: Severity::Error,
                    context: None,
                }),
                Constraint::Flow { definer, killer, reagent }
                    if *killer == i && !(self.done.contains(definer) && self.alive_before.contains(reagent)) =>
                {
                    self.violations.push(Violation {
                        kind: ConstraintKind::Flow,
                        step: pos,
                        instruction: i,
                        subject: reagent.clone(),
                        reason: format!("`{reagent}` from instruction {definer} is not available"),
                        severity: Severity::Error,
                        context: None,
                    })
                }
                _ => {}
            }
        }

        self.machine.force(i);
        let effect = self.machine.transition(i, instr, &model.spec, &self.gateway)?;
        let created: Vec<crate::flow::ReagentRecord> = self.machine.created[before..].to_vec();
        let mut added_ml = 0.0;
        for r in &created {
            if r.origin == crate::flow::RecordOrigin::Source {
                self.constituents.insert(r.id.clone(), BTreeSet::from([r.name.clone()]));
                if let Some(q) = r.quantity.as_ref().filter(|q| q.dimension() == Dimension::Volume) {
                    added_ml += q.to_base().midpoint();
                }
            }
        }
        let consumed: BTreeSet<String> = effect.kills.iter().flat_map(|k| self.constituents.get(k).cloned().unwrap_or_default()).collect();
        for id in &effect.defines {
            self.constituents.entry(id.clone()).or_default().extend(consumed.iter().cloned());
        }
        if effect.defines.is_empty() {
            for id in &effect.mutates {
                self.constituents.entry(id.clone()).or_default().extend(consumed.iter().cloned());
            }
        }

        // unitless amounts stay out of the volume math
        for b in &instr.bindings {
            let name = model.spec.canonical_slot(&b.slot);
            let volumetric = model.spec.parameter(name).is_some_and(|p| p.unit == Some(Dimension::Volume));
            if let (true, Value::Quantity(q)) = (volumetric, &b.value) {
                if q.unit.is_none() {
                    let note = format!("instruction {i}: `{name} = {q}` has no unit and is left out of volumes");
                    if !self.trace.assumptions.contains(&note) {
                        self.trace.assumptions.push(note);
                    }
                }
            }
        }

        let params = quantity_params(instr, &model.spec);
        let prev = self.trace.steps.last().map(|s| s.context.clone()).unwrap_or_default();
        let mut context = ExecutionContext {
            containers: BTreeMap::new(),
            temperature_c: params.get("temperature").map(|t| t[1]).or(prev.temperature_c),
            elapsed_s: prev.elapsed_s + params.get("duration").map_or(0.0, |d| d[1]),
        };
        for r in &self.machine.memory {
            let Some(c) = &r.container else { continue };
            let state = context.containers.entry(c.clone()).or_default();
            if let Some(q) = r.quantity.as_ref().filter(|q| q.dimension() == Dimension::Volume) {
                let m = q.to_base();
                state.volume_ml += m.midpoint();
                state.volume_max_ml += m.hi();
            }
            let parts = self.constituents.get(&r.id).cloned().unwrap_or_else(|| BTreeSet::from([r.name.clone()]));
            for p in parts {
                for tag in model.resources.tags_of(&p) {
                    state.attributes.insert(tag.to_string());
                }
                state.contents.insert(p);
            }
        }
        let acting = effect
            .defines
            .iter()
            .chain(&effect.mutates)
            .chain(&effect.kills)
            .find_map(|id| self.machine.created.iter().rev().find(|r| &r.id == id).and_then(|r| r.container.clone()))
            .or_else(|| instr.get("container").map(Value::plain));

        let step = TraceStep { instruction: i, op: instr.op.clone(), container: acting.clone(), params, added_ml, context };
        self.check_step(pos, &step);
        self.trace.steps.push(step);
        self.done.insert(i);
        Ok(())
    }

    fn check_step(&mut self, pos: usize, step: &TraceStep) {
        let model = self.model;
        for c in &model.constraints {
            match c {
                Constraint::Capacity { container, capacity_ml } => {
                    for (name, state) in &step.context.containers {
                        if model.resources.capacity_of(name).is_some()
                            && crate::flow::normalize_name(name) == crate::flow::normalize_name(container)
                            && state.volume_max_ml > *capacity_ml + 1e-9
                        {
                            self.violations.push(Violation {
                                kind: ConstraintKind::Spatial,
                                step: pos,
                                instruction: step.instruction,
                                subject: name.clone(),
                                reason: format!(
                                    "holds {} mL, capacity {} mL",
                                    crate::units::format_number(state.volume_max_ml),
                                    crate::units::format_number(*capacity_ml)
                                ),
                                severity: Severity::Error,
                                context: Some(step.context.clone()),
                            });
                        }
                    }
                }
                Constraint::Safety { rule } => {
                    let compiled = &model.rules[*rule];
                    if !compiled.rule.triggers_on(&step.op) {
                        continue;
                    }
                    let state = step.container.as_ref().and_then(|c| step.context.containers.get(c));
                    let scope = GuardScope {
                        attributes: state.map(|s| s.attributes.iter().map(String::as_str).collect()).unwrap_or_default(),
                        params: step.magnitudes(),
                        container_volume: state.map(|s| s.volume_max_ml),
                        temperature: step.context.temperature_c,
                        elapsed: step.context.elapsed_s,
                    };
                    if compiled.guard.eval(&scope) {
                        let reason = if compiled.rule.message.is_empty() {
                            format!("guard `{}` holds", compiled.guard)
                        } else {
                            compiled.rule.message.clone()
                        };
                        self.violations.push(Violation {
                            kind: ConstraintKind::Temporal,
                            step: pos,
                            instruction: step.instruction,
                            subject: compiled.rule.name.clone(),
                            reason,
                            severity: compiled.rule.severity,
                            context: Some(step.context.clone()),
                        });
                    }
                }
                _ => {}
            }
        }
    }
}

/// Run the model in a dependence-respecting order, checking every
/// constraint at every step. Seeded for reproducibility; the order itself
/// breaks ties by instruction index.
pub fn simulate(model: &ExecutionModel, seed: u64) -> Result<(ExecutionTrace, Vec<Violation>), ExecutionError> {
    let order = topological_order(model)?;
    let mut assumptions = Vec::new();
    let sequence = unroll(&order, &model.program, &mut assumptions);
    let mut sim = Simulator {
        model,
        gateway: ExtractorGateway::rule(),
        machine: PdaMachine::new(&model.program),
        constituents: BTreeMap::new(),
        trace: ExecutionTrace { seed, steps: Vec::new(), assumptions },
        violations: Vec::new(),
        done: BTreeSet::new(),
        alive_before: BTreeSet::new(),
    };
    for i in sequence {
        sim.step(i)?;
    }
    Ok((sim.trace, sim.violations))
}

/// Full satisfaction: every instruction ran and no constraint failed.
pub fn fully_satisfied(model: &ExecutionModel, trace: &ExecutionTrace, violations: &[Violation]) -> bool {
    let ran: BTreeSet<usize> = trace.steps.iter().map(|s| s.instruction).collect();
    ran.len() == model.program.instructions.len() && violations.is_empty()
}

/// Simulate and bundle the result with capacity minima.
pub fn run_report(model: &ExecutionModel, seed: u64) -> Result<SimulationReport, ExecutionError> {
    let (trace, violations) = simulate(model, seed)?;
    Ok(SimulationReport {
        satisfied: fully_satisfied(model, &trace, &violations),
        capacity: track_capacity(&trace),
        trace,
        violations,
        whatif: None,
    })
}

/// Minimal capacity each container needs: the largest volume it holds at any step.
pub fn track_capacity(trace: &ExecutionTrace) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for s in &trace.steps {
        for (c, state) in &s.context.containers {
            if state.volume_max_ml > 0.0 {
                let e = out.entry(c.clone()).or_insert(0.0);
                *e = e.max(state.volume_max_ml);
            }
        }
    }
    out
}

/// Temporal (safety) violations of a trace.
pub fn check_safety(trace: &ExecutionTrace, model: &ExecutionModel) -> Vec<Violation> {
    let mut sim = Simulator {
        model,
        gateway: ExtractorGateway::rule(),
        machine: PdaMachine::new(&DslProgram::default()),
        constituents: BTreeMap::new(),
        trace: ExecutionTrace::default(),
        violations: Vec::new(),
        done: BTreeSet::new(),
        alive_before: BTreeSet::new(),
    };
    for (pos, step) in trace.steps.iter().enumerate() {
        sim.check_step(pos, step);
    }
    sim.violations.retain(|v| v.kind == ConstraintKind::Temporal);
    sim.violations
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialVerdict {
    pub partially_satisfying: bool,
    /// Ordered pairs (earlier, later) the graphs cannot realize.
    pub broken_pairs: Vec<(usize, usize)>,
    /// Spatial and temporal violations already committed by the prefix.
    pub irrecoverable: Vec<Violation>,
}

fn reachable(n: usize, edges: &[(usize, usize)], from: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut todo = vec![from];
    while let Some(x) = todo.pop() {
        for &(a, b) in edges {
            if a == x && b < n && seen.insert(b) {
                todo.push(b);
            }
        }
    }
    seen
}

/// A prefix partially satisfies the model when every ordered pair in it has
/// an op-graph path and no reagent dependence runs the other way. Spatial
/// and temporal failures inside the prefix cannot be undone and are listed.
pub fn check_partial(prefix: &ExecutionTrace, model: &ExecutionModel) -> PartialVerdict {
    let n = model.program.instructions.len();
    let op_edges: Vec<(usize, usize)> = model.pdg.op_edges.iter().map(|e| (e.from, e.to)).collect();
    // loop-carried flow runs backwards by construction and is left out
    let flow_edges: Vec<(usize, usize)> =
        model.pdg.op_edges.iter().filter(|e| e.reagent.is_some() && e.from < e.to).map(|e| (e.from, e.to)).collect();
    let op_reach: Vec<BTreeSet<usize>> = (0..n).map(|i| reachable(n, &op_edges, i)).collect();
    let flow_reach: Vec<BTreeSet<usize>> = (0..n).map(|i| reachable(n, &flow_edges, i)).collect();
    let order: Vec<usize> = prefix.steps.iter().map(|s| s.instruction).collect();
    let mut broken = Vec::new();
    for (a, &i) in order.iter().enumerate() {
        for &j in &order[a + 1..] {
            if i >= n || j >= n || i == j {
                continue;
            }
            let op_ok = op_reach[i].contains(&j);
            // a later iteration may run an earlier instruction again
            let next_round = j < i && model.program.controls.iter().any(|c| c.kind == ControlKind::Loop && c.contains(i) && c.contains(j));
            let flow_ok = next_round || !flow_reach[j].contains(&i);
            if !(op_ok && flow_ok) && !broken.contains(&(i, j)) {
                broken.push((i, j));
            }
        }
    }
    let mut sim = Simulator {
        model,
        gateway: ExtractorGateway::rule(),
        machine: PdaMachine::new(&DslProgram::default()),
        constituents: BTreeMap::new(),
        trace: ExecutionTrace::default(),
        violations: Vec::new(),
        done: BTreeSet::new(),
        alive_before: BTreeSet::new(),
    };
    for (pos, step) in prefix.steps.iter().enumerate() {
        sim.check_step(pos, step);
    }
    PartialVerdict { partially_satisfying: broken.is_empty(), broken_pairs: broken, irrecoverable: sim.violations }
}

/// A counterfactual change to one instruction.
#[derive(Debug, Clone, PartialEq)]
pub enum InstructionEdit {
    /// Rebind one parameter, value written as in a listing.
    Set {
        index: usize,
        slot: String,
        value: String,
    },
    Insert {
        index: usize,
        instruction: String,
    },
    Delete {
        index: usize,
    },
}

impl FromStr for InstructionEdit {
    type Err = ExecutionError;

    /// `set 2 temperature=70C`, `delete 1`, `insert 1 heat(target = x, temperature = 70C)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ExecutionError::InvalidEdit(format!("cannot read edit `{s}`"));
        let s = s.trim();
        let (verb, rest) = s.split_once(char::is_whitespace).ok_or_else(bad)?;
        let (index, rest) = match rest.trim().split_once(char::is_whitespace) {
            Some((i, r)) => (i, r.trim()),
            None => (rest.trim(), ""),
        };
        let index: usize = index.parse().map_err(|_| bad())?;
        match verb {
            "set" => {
                let (slot, value) = rest.split_once('=').ok_or_else(bad)?;
                Ok(InstructionEdit::Set { index, slot: slot.trim().to_string(), value: value.trim().to_string() })
            }
            "insert" if !rest.is_empty() => Ok(InstructionEdit::Insert { index, instruction: rest.to_string() }),
            "delete" if rest.is_empty() => Ok(InstructionEdit::Delete { index }),
            _ => Err(bad()),
        }
    }
}

impl InstructionEdit {
    /// Apply to a program and map new indices back to the old ones.
    pub fn apply(&self, program: &DslProgram) -> Result<(DslProgram, Vec<Option<usize>>), ExecutionError> {
        let n = program.instructions.len();
        let mut out = program.clone();
        let map: Vec<Option<usize>> = match self {
            InstructionEdit::Set { index, slot, value } => {
                let instr =
                    out.instructions.get_mut(*index).ok_or_else(|| ExecutionError::InvalidEdit(format!("no instruction {index}")))?;
                let parsed = DslProgram::from_listing(&format!("x({slot} = {value});"))
                    .map_err(|e| ExecutionError::InvalidEdit(e.to_string()))?
                    .instructions
                    .remove(0)
                    .bindings
                    .remove(0)
                    .value;
                instr.set(slot, parsed);
                (0..n).map(Some).collect()
            }
            InstructionEdit::Insert { index, instruction } => {
                if *index > n {
                    return Err(ExecutionError::InvalidEdit(format!("cannot insert at {index} into {n} instructions")));
                }
                let src = if instruction.trim_end().ends_with(';') { instruction.clone() } else { format!("{instruction};") };
                let mut parsed = DslProgram::from_listing(&src).map_err(|e| ExecutionError::InvalidEdit(e.to_string()))?;
                if parsed.instructions.len() != 1 {
                    return Err(ExecutionError::InvalidEdit("insert takes exactly one instruction".into()));
                }
                out.insert(*index, parsed.instructions.remove(0));
                (0..=n)
                    .map(|k| {
                        if k < *index {
                            Some(k)
                        } else if k == *index {
                            None
                        } else {
                            Some(k - 1)
                        }
                    })
                    .collect()
            }
            InstructionEdit::Delete { index } => {
                if *index >= n {
                    return Err(ExecutionError::InvalidEdit(format!("no instruction {index}")));
                }
                out.delete(*index);
                (0..n - 1).map(|k| Some(if k < *index { k } else { k + 1 })).collect()
            }
        };
        Ok((out, map))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationDelta {
    pub added: Vec<Violation>,
    pub removed: Vec<Violation>,
}

impl ViolationDelta {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }
}

/// Re-simulate after `edit` and report violations gained and lost.
pub fn whatif(model: &ExecutionModel, edit: &InstructionEdit, seed: u64) -> Result<ViolationDelta, ExecutionError> {
    let (_, baseline) = simulate(model, seed)?;
    let (program, map) = edit.apply(&model.program)?;
    let report = validate_program(&program, &model.spec);
    if !report.is_verified() {
        let first = report.violations().next().map(|v| v.to_string()).unwrap_or_default();
        return Err(ExecutionError::InvalidEdit(first));
    }
    let gateway = ExtractorGateway::rule();
    let flow = analyze_flow(&program, &model.spec, &gateway)?;
    let pdg = build_pdg(&program, &flow, &model.spec.name, seed)?;
    let rules: Vec<SafetyRule> = model.rules.iter().map(|r| r.rule.clone()).collect();
    let edited = make_model(&program, &pdg, &rules, &model.resources, &model.spec)?;
    let (_, after) = simulate(&edited, seed)?;

    let key = |v: &Violation, instruction: Option<usize>| (v.kind, v.subject.clone(), instruction);
    let old: Vec<_> = baseline.iter().map(|v| key(v, Some(v.instruction))).collect();
    let new: Vec<_> = after.iter().map(|v| key(v, map.get(v.instruction).copied().flatten())).collect();
    let added = after.iter().zip(&new).filter(|(_, k)| !old.contains(k)).map(|(v, _)| v.clone()).collect();
    let removed = baseline.iter().zip(&old).filter(|(_, k)| !new.contains(k)).map(|(v, _)| v.clone()).collect();
    Ok(ViolationDelta { added, removed })
}

#[cfg(test)]
mod tests;
