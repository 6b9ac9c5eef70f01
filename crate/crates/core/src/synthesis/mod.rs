//! Program synthesis: choose a pattern per action and bind entities to its
//! slots, minimizing a three-term divergence with an EM-style search.

mod control;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use control::detect_control_flow;

use crate::dsl::{DslSpec, OperationSchema, Role};
use crate::preprocess::entities::{Entity, Label, Svo};
use crate::preprocess::lexicon::content_words;
use crate::preprocess::{ActionUnit, EntitySequence, UnitKind};
use crate::program::{Binding, DslProgram, Instruction, Origin, ReviewFlag, Stage, Value, NOOP};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthesisError {
    #[error("program has {program} instructions but the entity sequence has {units} action units")]
    LengthMismatch { program: usize, units: usize },
    #[error("invalid synthesis config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    /// Weights of span distance, structure mismatch and unmapped entities.
    pub lambda: [f64; 3],
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Exponent of the size prior, P(pattern) ∝ size^-strength.
    pub size_prior: f64,
    /// Inverse temperature of the pattern posterior used after the first E-step.
    pub sharpness: f64,
    /// Stop a chain once its best score has not improved for this many iterations.
    pub patience: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig { lambda: [1.0; 3], max_iterations: 50, restarts: 8, seed: 0, size_prior: 1.0, sharpness: 4.0, patience: 2 }
    }
}

impl SynthesisConfig {
    pub fn check(&self) -> Result<(), SynthesisError> {
        if self.lambda.iter().any(|l| *l < 0.0 || !l.is_finite()) || self.lambda.iter().all(|l| *l == 0.0) {
            return Err(SynthesisError::Config("lambda values must be >= 0 and not all zero".into()));
        }
        if self.max_iterations == 0 || self.restarts == 0 {
            return Err(SynthesisError::Config("iteration cap and restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Units that become instructions (operations and placeholders).
pub fn instruction_units(seq: &EntitySequence) -> Vec<&ActionUnit> {
    seq.units.iter().filter(|u| matches!(u.kind, UnitKind::Operation | UnitKind::Placeholder)).collect()
}

/// Slot layouts of `op` restricted to slots bound from text; roles filled
/// later (outputs, resources, control hooks) are left out.
pub fn candidate_patterns(op: &OperationSchema) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    for p in &op.patterns {
        let names: Vec<String> = p.slot_names().filter(|s| op.slot(s).is_some_and(|d| !d.role.is_deferred())).map(str::to_string).collect();
        if !out.contains(&names) {
            out.push(names);
        }
    }
    out
}

fn svo_agrees(role: Role, svo: Option<Svo>) -> bool {
    match (role, svo) {
        (_, None) => true,
        (Role::Input, Some(s)) => s == Svo::Object,
        (Role::Target, Some(s)) => s != Svo::Setting,
        (Role::Destination, Some(s)) => s == Svo::Place,
        (Role::Condition, Some(s)) => s == Svo::Setting,
        _ => true,
    }
}

fn entity_value(e: &Entity) -> Value {
    match e.quantity() {
        Some(q) if e.label.is_quantity() && (q.unit.is_some() || e.label == Label::Count) => Value::Quantity(q),
        _ => Value::text(e.surface.clone()),
    }
}

/// Greedy label-to-slot binding: each entity goes to the first compatible
/// slot with room, preferring slots whose role agrees with its SVO role.
/// Returns the instruction and, per slot, the bound entity indices.
pub fn bind_entities(
    op: &OperationSchema,
    layout: &[String],
    entities: &[Entity],
    spec: &DslSpec,
) -> (Instruction, BTreeMap<String, Vec<usize>>) {
    let mut bound: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (j, e) in entities.iter().enumerate() {
        let open: Vec<&String> = layout
            .iter()
            .filter(|s| {
                let Some(d) = op.slot(s) else { return false };
                let accepts = spec.parameter(s).is_some_and(|p| p.accepts_label(e.label.as_str()));
                accepts && bound.get(*s).map_or(0, Vec::len) < d.max_arity
            })
            .collect();
        let pick = open.iter().find(|s| op.slot(s).is_some_and(|d| svo_agrees(d.role, e.svo))).or_else(|| open.first());
        if let Some(s) = pick {
            bound.entry(s.to_string()).or_default().push(j);
        }
    }
    let mut instr = Instruction::new(&op.name);
    for s in layout {
        let value = match bound.get(s).map(Vec::as_slice) {
            None | Some([]) => Value::Missing,
            Some([j]) => entity_value(&entities[*j]),
            Some(js) => Value::List(js.iter().map(|j| entity_value(&entities[*j])).collect()),
        };
        instr.bindings.push(Binding::new(s.clone(), value));
    }
    for d in op.slots.iter().filter(|d| d.required && d.role.is_deferred()) {
        instr.bindings.push(Binding::new(d.name.clone(), Value::Missing));
    }
    (instr, bound)
}

fn edit_distance(a: &[String], b: &[String]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// The three indicator values of one instruction against its unit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Indicators {
    pub span_distance: f64,
    pub structure_mismatch: f64,
    pub unmapped: f64,
}

impl Indicators {
    pub fn weighted(&self, lambda: &[f64; 3]) -> f64 {
        lambda[0] * self.span_distance + lambda[1] * self.structure_mismatch + lambda[2] * self.unmapped
    }
}

fn value_matches(v: &Value, e: &Entity) -> bool {
    match v {
        Value::Text(t) => t == &e.surface,
        Value::Quantity(q) => e.quantity().as_ref() == Some(q),
        _ => false,
    }
}

/// Indicators for one instruction; entities are matched to bound values by surface.
pub fn step_indicators(instr: &Instruction, unit: &ActionUnit, spec: &DslSpec) -> Indicators {
    let text_words = content_words(&unit.text);
    let mut used = vec![false; unit.entities.len()];
    let mut render: Vec<String> = Vec::new();
    let mut mismatch = 0usize;
    if !instr.is_noop() {
        render.push(instr.op.to_lowercase());
    }
    let op = spec.operation(&instr.op);
    for b in &instr.bindings {
        let Some(slot) = op.and_then(|o| o.slot(spec.canonical_slot(&b.slot))) else { continue };
        if slot.role.is_deferred() {
            continue;
        }
        let items = b.value.items();
        let mut any = false;
        for v in items {
            let hit = (0..unit.entities.len()).find(|&j| !used[j] && value_matches(v, &unit.entities[j]));
            match hit {
                Some(j) => {
                    used[j] = true;
                    any = true;
                    render.extend(content_words(&unit.entities[j].surface));
                    if !svo_agrees(slot.role, unit.entities[j].svo) {
                        mismatch += 1;
                    }
                }
                None if !v.is_unresolved() => {
                    any = true;
                    render.extend(content_words(&v.plain()));
                }
                None => {}
            }
        }
        // an optional slot the pattern elected but the text never fills
        if !any && !slot.required {
            mismatch += 1;
        }
    }
    let longest = render.len().max(text_words.len());
    let span_distance = if longest == 0 { 0.0 } else { edit_distance(&render, &text_words) as f64 / longest as f64 };
    Indicators { span_distance, structure_mismatch: mismatch as f64, unmapped: used.iter().filter(|u| !**u).count() as f64 }
}

/// D(p(c) || s(c)): weighted indicator sum over instruction/unit pairs.
pub fn divergence(program: &DslProgram, seq: &EntitySequence, spec: &DslSpec, cfg: &SynthesisConfig) -> Result<f64, SynthesisError> {
    let units = instruction_units(seq);
    if units.len() != program.instructions.len() {
        return Err(SynthesisError::LengthMismatch { program: program.instructions.len(), units: units.len() });
    }
    Ok(program.instructions.iter().zip(units).map(|(i, u)| step_indicators(i, u, spec).weighted(&cfg.lambda)).sum())
}

/// A per-unit decision: operation and index into its candidate patterns.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Choice {
    op: Option<String>,
    pattern: usize,
}

struct Problem<'a> {
    units: Vec<&'a ActionUnit>,
    spec: &'a DslSpec,
    cfg: &'a SynthesisConfig,
    /// Per unit: (operation, weight) and each operation's layouts.
    ops: Vec<Vec<(String, f64)>>,
    layouts: BTreeMap<String, Vec<Vec<String>>>,
}

impl<'a> Problem<'a> {
    fn new(seq: &'a EntitySequence, spec: &'a DslSpec, cfg: &'a SynthesisConfig) -> Self {
        let units = instruction_units(seq);
        let mut layouts = BTreeMap::new();
        let ops = units
            .iter()
            .map(|u| {
                u.candidates
                    .iter()
                    .filter_map(|c| {
                        let op = spec.operation(&c.operation)?;
                        layouts.entry(op.name.clone()).or_insert_with(|| candidate_patterns(op));
                        Some((op.name.clone(), c.score))
                    })
                    .collect()
            })
            .collect();
        Problem { units, spec, cfg, ops, layouts }
    }

    fn build(&self, t: usize, choice: &Choice, entities: &[Entity]) -> Instruction {
        let unit = self.units[t];
        let mut instr = match &choice.op {
            None => Instruction::new(NOOP),
            Some(name) => {
                let op = self.spec.operation(name).expect("candidate operations exist");
                bind_entities(op, &self.layouts[name][choice.pattern], entities, self.spec).0
            }
        };
        instr.origin = Some(Origin { step: unit.step, span: unit.span });
        instr
    }

    fn step_score(&self, t: usize, choice: &Choice, entities: &[Entity]) -> f64 {
        let instr = self.build(t, choice, entities);
        let mut unit = self.units[t].clone();
        unit.entities = entities.to_vec();
        step_indicators(&instr, &unit, self.spec).weighted(&self.cfg.lambda)
    }

    /// All (choice, prior weight) options for unit `t`.
    fn options(&self, t: usize) -> Vec<(Choice, f64)> {
        if self.ops[t].is_empty() {
            return vec![(Choice { op: None, pattern: 0 }, 1.0)];
        }
        let mut out = Vec::new();
        for (name, op_weight) in &self.ops[t] {
            let layouts = &self.layouts[name];
            for (k, l) in layouts.iter().enumerate() {
                let size = l.len().max(1) as f64;
                out.push((Choice { op: Some(name.clone()), pattern: k }, op_weight * size.powf(-self.cfg.size_prior)));
            }
        }
        out
    }

    fn missing_count(&self, t: usize, choice: &Choice, entities: &[Entity]) -> usize {
        self.build(t, choice, entities).bindings.iter().filter(|b| b.value == Value::Missing).count()
    }
}

fn draw<'c>(rng: &mut ChaCha8Rng, options: &'c [(Choice, f64)]) -> &'c Choice {
    let total: f64 = options.iter().map(|o| o.1).sum();
    let mut x = rng.gen::<f64>() * total;
    for (c, w) in options {
        if x < *w {
            return c;
        }
        x -= w;
    }
    &options.last().expect("non-empty options").0
}

fn labels_of(seq: &EntitySequence) -> Vec<Vec<Entity>> {
    instruction_units(seq).iter().map(|u| u.entities.clone()).collect()
}

fn assemble(
    problem: &Problem<'_>,
    choices: &[Choice],
    entities: &[Vec<Entity>],
    product_of: &EntitySequence,
) -> (DslProgram, EntitySequence) {
    let instrs = choices.iter().enumerate().map(|(t, c)| problem.build(t, c, &entities[t])).collect();
    let mut seq = product_of.clone();
    let mut t = 0;
    for u in seq.units.iter_mut() {
        if matches!(u.kind, UnitKind::Operation | UnitKind::Placeholder) {
            u.entities = entities[t].clone();
            t += 1;
        }
    }
    (DslProgram::new(instrs), seq)
}

fn choices_from(program: &DslProgram, problem: &Problem<'_>) -> Vec<Choice> {
    program
        .instructions
        .iter()
        .map(|i| {
            let op = problem.spec.operation(&i.op).filter(|_| !i.is_noop());
            let Some(op) = op else { return Choice { op: None, pattern: 0 } };
            let names: BTreeSet<&str> = i
                .bindings
                .iter()
                .map(|b| problem.spec.canonical_slot(&b.slot))
                .filter(|s| op.slot(s).is_some_and(|d| !d.role.is_deferred()))
                .collect();
            let pattern = problem
                .layouts
                .get(&i.op)
                .and_then(|ls| ls.iter().position(|l| l.iter().map(String::as_str).collect::<BTreeSet<_>>() == names));
            Choice { op: Some(i.op.clone()), pattern: pattern.unwrap_or(0) }
        })
        .collect()
}

/// E-step from the prior: operation ∝ match score, pattern ∝ size^-strength.
pub fn sample_program(seq: &EntitySequence, spec: &DslSpec, cfg: &SynthesisConfig, rng: &mut ChaCha8Rng) -> DslProgram {
    let problem = Problem::new(seq, spec, cfg);
    let entities = labels_of(seq);
    let choices: Vec<Choice> = (0..problem.units.len()).map(|t| draw(rng, &problem.options(t)).clone()).collect();
    let mut program = assemble(&problem, &choices, &entities, seq).0;
    flag_placeholders(&mut program, &problem);
    program
}

fn flag_placeholders(program: &mut DslProgram, problem: &Problem<'_>) {
    for (t, instr) in program.instructions.iter().enumerate() {
        if instr.is_noop() {
            let unit = problem.units[t];
            let verb = unit.verb.as_ref().map_or(String::new(), |v| format!(" ({:?})", v.text));
            program.flags.push(ReviewFlag {
                stage: Stage::Synthesis,
                step: Some(unit.step),
                instruction: Some(t),
                parameter: None,
                reason: format!("no operation matched{verb}; placeholder needs review"),
            });
        }
    }
}

fn posterior_sample(problem: &Problem<'_>, entities: &[Vec<Entity>], rng: &mut ChaCha8Rng) -> Vec<Choice> {
    (0..problem.units.len())
        .map(|t| {
            let opts = problem.options(t);
            let scored: Vec<(Choice, f64)> =
                opts.iter().map(|(c, w)| (c.clone(), w.ln() - problem.cfg.sharpness * problem.step_score(t, c, &entities[t]))).collect();
            let top = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
            let weighted: Vec<(Choice, f64)> = scored.into_iter().map(|(c, s)| (c, (s - top).exp())).collect();
            draw(rng, &weighted).clone()
        })
        .collect()
}

/// Labels an entity could take under `op`'s chosen layout.
pub fn label_proposals(entity: &Entity, op: &OperationSchema, layout: &[String], spec: &DslSpec) -> Vec<Label> {
    let q = entity.quantity();
    let proxy_of = |param: &str| spec.alias_for(param, &entity.surface).is_some();
    let mut out = Vec::new();
    for s in layout {
        let Some(param) = spec.parameter(s) else { continue };
        if op.slot(s).is_none() {
            continue;
        }
        for l in &param.labels {
            let Ok(label) = l.parse::<Label>() else { continue };
            let ok = if label.is_quantity() {
                proxy_of(s)
                    || q.as_ref().is_some_and(|q| match &q.unit {
                        Some(u) => Label::for_dimension(q.dimension(), Some(u)) == label,
                        None => label == Label::Count,
                    })
            } else {
                q.is_none() && !spec.parameters().any(|p| proxy_of(&p.name))
            };
            if ok && !out.contains(&label) {
                out.push(label);
            }
        }
    }
    out.sort();
    out
}

fn refine(problem: &Problem<'_>, choices: &[Choice], entities: &mut [Vec<Entity>]) {
    for t in 0..problem.units.len() {
        let Some(name) = &choices[t].op else { continue };
        let op = problem.spec.operation(name).expect("candidate operations exist");
        let layout = &problem.layouts[name][choices[t].pattern];
        let mut current = problem.step_score(t, &choices[t], &entities[t]);
        loop {
            let mut changed = false;
            for j in 0..entities[t].len() {
                for label in label_proposals(&entities[t][j], op, layout, problem.spec) {
                    if label == entities[t][j].label {
                        continue;
                    }
                    let old = entities[t][j].label;
                    entities[t][j].label = label;
                    let score = problem.step_score(t, &choices[t], &entities[t]);
                    if score < current - 1e-12 {
                        current = score;
                        changed = true;
                    } else {
                        entities[t][j].label = old;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }
}

/// M-step: greedy label edits that strictly lower the divergence.
pub fn refine_labels(
    program: &DslProgram,
    seq: &EntitySequence,
    spec: &DslSpec,
    cfg: &SynthesisConfig,
) -> Result<(EntitySequence, DslProgram), SynthesisError> {
    let problem = Problem::new(seq, spec, cfg);
    if problem.units.len() != program.instructions.len() {
        return Err(SynthesisError::LengthMismatch { program: program.instructions.len(), units: problem.units.len() });
    }
    let choices = choices_from(program, &problem);
    let mut entities = labels_of(seq);
    let before = divergence(program, seq, spec, cfg)?;
    refine(&problem, &choices, &mut entities);
    let (refined, new_seq) = assemble(&problem, &choices, &entities, seq);
    if divergence(&refined, &new_seq, spec, cfg)? > before + 1e-12 {
        return Ok((seq.clone(), program.clone()));
    }
    let mut refined = refined;
    refined.flags = program.flags.clone();
    Ok((new_seq, refined))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub program: DslProgram,
    pub score: f64,
    /// The entity sequence with refined labels.
    pub sequence: EntitySequence,
    /// Best score after each iteration, per chain.
    pub traces: Vec<Vec<f64>>,
}

#[derive(Clone)]
struct Candidate {
    score: f64,
    missing: usize,
    choices: Vec<Choice>,
    entities: Vec<Vec<Entity>>,
}

impl Candidate {
    fn better_than(&self, other: &Candidate) -> bool {
        const EPS: f64 = 1e-9;
        if (self.score - other.score).abs() > EPS {
            return self.score < other.score;
        }
        (self.missing, &self.choices) < (other.missing, &other.choices)
    }
}

fn evaluate(problem: &Problem<'_>, choices: Vec<Choice>, entities: Vec<Vec<Entity>>) -> Candidate {
    let score = (0..choices.len()).map(|t| problem.step_score(t, &choices[t], &entities[t])).sum();
    let missing = (0..choices.len()).map(|t| problem.missing_count(t, &choices[t], &entities[t])).sum();
    Candidate { score, missing, choices, entities }
}

fn run_chain(problem: &Problem<'_>, seed: u64) -> (Candidate, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entities: Vec<Vec<Entity>> = problem.units.iter().map(|u| u.entities.clone()).collect();
    let mut best: Option<Candidate> = None;
    let mut trace = Vec::new();
    let mut stale = 0;
    for iter in 0..problem.cfg.max_iterations {
        let choices = if iter == 0 {
            (0..problem.units.len()).map(|t| draw(&mut rng, &problem.options(t)).clone()).collect()
        } else {
            posterior_sample(problem, &entities, &mut rng)
        };
        refine(problem, &choices, &mut entities);
        let cand = evaluate(problem, choices, entities.clone());
        match &best {
            Some(b) if !cand.better_than(b) => stale += 1,
            _ => {
                best = Some(cand);
                stale = 0;
            }
        }
        trace.push(best.as_ref().unwrap().score);
        if stale >= problem.cfg.patience {
            break;
        }
    }
    (best.expect("at least one iteration"), trace)
}

/// argmin over patterns and labels of D(p(c) || s(c)) with independent restarts.
pub fn synthesize(seq: &EntitySequence, spec: &DslSpec, cfg: &SynthesisConfig) -> Result<Synthesis, SynthesisError> {
    cfg.check()?;
    let problem = Problem::new(seq, spec, cfg);
    if problem.units.is_empty() {
        return Ok(Synthesis { program: DslProgram::default(), score: 0.0, sequence: seq.clone(), traces: Vec::new() });
    }
    let seeds: Vec<u64> = (0..cfg.restarts as u64).map(|k| cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k)).collect();
    let results: Vec<(Candidate, Vec<f64>)> = std::thread::scope(|s| {
        let problem = &problem;
        let handles: Vec<_> = seeds.iter().map(|&seed| s.spawn(move || run_chain(problem, seed))).collect();
        handles.into_iter().map(|h| h.join().expect("chain panicked")).collect()
    });
    let mut best: Option<&Candidate> = None;
    for (c, _) in &results {
        if best.is_none_or(|b| c.better_than(b)) {
            best = Some(c);
        }
    }
    let best = best.expect("restarts >= 1");
    let (mut program, sequence) = assemble(&problem, &best.choices, &best.entities, seq);
    flag_placeholders(&mut program, &problem);
    Ok(Synthesis { program, score: best.score, sequence, traces: results.into_iter().map(|r| r.1).collect() })
}

#[cfg(test)]
mod tests;
