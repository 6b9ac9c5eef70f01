//! Reference implementations that answer the same questions as the library
//! by exhaustive enumeration.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use protoflow::dsl::DslSpec;
use protoflow::preprocess::entities::{Entity, Label, Svo};
use protoflow::preprocess::{ActionUnit, EntitySequence, OpCandidate, UnitKind};
use protoflow::program::{Binding, ControlBlock, ControlKind, DslProgram, Instruction, Value, NOOP};
use protoflow::synthesis::{bind_entities, candidate_patterns, label_proposals, step_indicators, SynthesisConfig};

// ---------------------------------------------------------------------------
// synthesis

/// Three operations with at most three text-bound patterns each.
pub const BENCH: &str = r#"
name = "bench"
start = "program"

[variables]
ctrl = []
op = ["mix", "heat", "wait"]
cond = []
par = ["slot", "target", "temperature", "duration"]

[terminals]
classes = ["string", "quantity"]

[[productions]]
lhs = "program"
rhs = ["mix program", "heat program", "wait program", ""]

[[productions]]
lhs = "mix"
rhs = ["slot", "slot target"]

[[productions]]
lhs = "heat"
rhs = ["target temperature", "target", "temperature"]

[[productions]]
lhs = "wait"
rhs = ["duration", "duration temperature"]

[[productions]]
lhs = "slot"
rhs = ["string"]

[[productions]]
lhs = "target"
rhs = ["string"]

[[productions]]
lhs = "temperature"
rhs = ["quantity"]

[[productions]]
lhs = "duration"
rhs = ["quantity"]

[semantics.operations.mix]
effect = "combine"

[semantics.operations.heat]
effect = "mutate"

[semantics.operations.wait]
effect = "none"

[semantics.parameters.slot]
role = "input"
labels = ["reagent"]

[semantics.parameters.target]
role = "target"
labels = ["reagent", "container"]

[semantics.parameters.temperature]
labels = ["temperature"]
unit = "temperature-C"

[semantics.parameters.duration]
labels = ["duration"]
unit = "duration-s"
"#;

const SURFACES: &[(&str, &[Label])] = &[
    ("water", &[Label::Reagent, Label::Other]),
    ("salt", &[Label::Reagent, Label::Container]),
    ("flask", &[Label::Container, Label::Reagent]),
    ("70 C", &[Label::Temperature, Label::Other, Label::Duration]),
    ("5 min", &[Label::Duration, Label::Temperature]),
];
const VERBS: &[(&str, &str)] = &[("Mix", "mix"), ("Heat", "heat"), ("Wait", "wait")];
const SVOS: &[Option<Svo>] = &[None, Some(Svo::Object), Some(Svo::Place), Some(Svo::Setting)];

/// A random entity sequence of 1..=4 units, each with 1..=2 candidate operations.
pub fn random_instance(seed: u64) -> EntitySequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seq = EntitySequence::default();
    for step in 0..rng.gen_range(1..=4) {
        let (verb, op) = VERBS[rng.gen_range(0..VERBS.len())];
        let mut entities = Vec::new();
        let mut words = vec![verb.to_string()];
        for _ in 0..rng.gen_range(0..=3) {
            let (surface, labels) = SURFACES[rng.gen_range(0..SURFACES.len())];
            let mut e = Entity::new(surface, (0, 0), labels[rng.gen_range(0..labels.len())], 1.0);
            e.svo = SVOS[rng.gen_range(0..SVOS.len())];
            words.push(surface.to_string());
            entities.push(e);
        }
        let text = words.join(" ");
        let mut unit = ActionUnit::placeholder(step, (0, text.len()), &text);
        unit.kind = UnitKind::Operation;
        unit.candidates.push(OpCandidate { operation: op.into(), score: 1.0 });
        if rng.gen_bool(0.5) {
            let other = VERBS[rng.gen_range(0..VERBS.len())].1;
            if other != op {
                unit.candidates.push(OpCandidate { operation: other.into(), score: rng.gen_range(0.3..1.0) });
            }
        }
        unit.entities = entities;
        seq.units.push(unit);
    }
    seq
}

/// Minimum divergence over every operation, pattern and label assignment.
/// The objective is a sum of per-step terms, so each step is minimized on
/// its own over the full product of its choices. An entity may take its
/// extracted label or any label some candidate layout of its step proposes.
pub fn brute_force_minimum(seq: &EntitySequence, spec: &DslSpec, cfg: &SynthesisConfig) -> f64 {
    let mut total = 0.0;
    for unit in seq.units.iter().filter(|u| matches!(u.kind, UnitKind::Operation | UnitKind::Placeholder)) {
        let layouts: Vec<_> = unit
            .candidates
            .iter()
            .filter_map(|c| spec.operation(&c.operation))
            .flat_map(|op| candidate_patterns(op).into_iter().map(move |l| (op, l)))
            .collect();
        let options: Vec<Vec<Label>> = unit
            .entities
            .iter()
            .map(|e| {
                let mut ls = vec![e.label];
                for (op, layout) in &layouts {
                    for l in label_proposals(e, op, layout, spec) {
                        if !ls.contains(&l) {
                            ls.push(l);
                        }
                    }
                }
                ls
            })
            .collect();
        let mut best = f64::INFINITY;
        for (op, layout) in &layouts {
            let mut pick = vec![0usize; options.len()];
            loop {
                let mut u = unit.clone();
                for (j, e) in u.entities.iter_mut().enumerate() {
                    e.label = options[j][pick[j]];
                }
                let (instr, _) = bind_entities(op, layout, &u.entities, spec);
                best = best.min(step_indicators(&instr, &u, spec).weighted(&cfg.lambda));
                // odometer over label choices
                let mut k = 0;
                while k < pick.len() {
                    pick[k] += 1;
                    if pick[k] < options[k].len() {
                        break;
                    }
                    pick[k] = 0;
                    k += 1;
                }
                if k == pick.len() {
                    break;
                }
            }
        }
        if best.is_infinite() {
            best = step_indicators(&Instruction::new(NOOP), unit, spec).weighted(&cfg.lambda);
        }
        total += best;
    }
    total
}

// ---------------------------------------------------------------------------
// reaching definitions

/// One combining operation over raw (text) and named (symbol) reagents.
pub const MIX: &str = r#"
name = "mix"
start = "program"

[variables]
ctrl = ["loop", "branch"]
op = ["mix"]
cond = []
par = ["slot", "target", "emit"]

[terminals]
classes = ["string", "symbol"]

[[productions]]
lhs = "program"
rhs = ["mix program", "loop program", "branch program", ""]

[[productions]]
lhs = "loop"
rhs = ["program"]

[[productions]]
lhs = "branch"
rhs = ["program"]

[[productions]]
lhs = "mix"
rhs = ["slot target? emit?"]

[[productions]]
lhs = "slot"
rhs = ["string", "symbol"]

[[productions]]
lhs = "target"
rhs = ["string", "symbol"]

[[productions]]
lhs = "emit"
rhs = ["symbol"]

[semantics.operations.mix]
effect = "combine"

[semantics.parameters.slot]
role = "input"

[semantics.parameters.target]
role = "target"

[semantics.parameters.emit]
role = "output"
"#;

const NAMES: &[&str] = &["water", "salt", "m1", "m2"];

fn random_ref(rng: &mut ChaCha8Rng) -> Value {
    let name = NAMES[rng.gen_range(0..NAMES.len())];
    if rng.gen_bool(0.5) {
        Value::text(name)
    } else {
        Value::symbol(name)
    }
}

fn crossing(a: &ControlBlock, b: &ControlBlock) -> bool {
    let disjoint = a.end < b.start || b.end < a.start;
    let nested = (a.start <= b.start && b.end <= a.end) || (b.start <= a.start && a.end <= b.end);
    !disjoint && !nested
}

/// Up to 8 `mix` instructions over at most 4 reagent names, with up to two
/// well-nested loops or branches.
pub fn random_program(seed: u64) -> DslProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=8);
    let mut program = DslProgram::default();
    for _ in 0..n {
        let mut instr = Instruction::new("mix");
        instr.bindings.push(Binding::new("slot", random_ref(&mut rng)));
        if rng.gen_bool(0.5) {
            instr.bindings.push(Binding::new("target", random_ref(&mut rng)));
        }
        if rng.gen_bool(0.6) {
            instr.bindings.push(Binding::new("emit", Value::symbol(NAMES[rng.gen_range(2..4)])));
        }
        program.instructions.push(instr);
    }
    for _ in 0..rng.gen_range(0..=2) {
        let start = rng.gen_range(0..n);
        let end = rng.gen_range(start..n);
        let block = if rng.gen_bool(0.5) {
            ControlBlock { kind: ControlKind::Branch, signal: "if".into(), predicate: "needed".into(), count: None, start, end }
        } else {
            let count = [None, Some(1), Some(2)][rng.gen_range(0..3)];
            ControlBlock { kind: ControlKind::Loop, signal: "repeat".into(), predicate: String::new(), count, start, end }
        };
        if program.controls.iter().all(|c| !crossing(c, &block) && (c.start, c.end) != (block.start, block.end)) {
            program.controls.push(block);
        }
    }
    program
}

/// Every instruction sequence the structured program can execute: loops run
/// their count (once when unbounded), branch bodies run or are skipped.
pub fn execution_paths(program: &DslProgram) -> Vec<Vec<usize>> {
    fn range(p: &DslProgram, start: usize, end: usize, exclude: Option<usize>) -> Vec<Vec<usize>> {
        let mut paths = vec![Vec::new()];
        let mut i = start;
        while i <= end {
            let block = p
                .controls
                .iter()
                .enumerate()
                .filter(|(k, c)| {
                    Some(*k) != exclude && c.start == i && c.end <= end && !(c.start == start && c.end == end && exclude.is_some())
                })
                .max_by_key(|(_, c)| c.end);
            let pieces: Vec<Vec<usize>> = match block {
                Some((k, c)) => {
                    let body = range(p, c.start, c.end, Some(k));
                    let pieces = match c.kind {
                        ControlKind::Branch => {
                            let mut v = body.clone();
                            v.push(Vec::new());
                            v
                        }
                        ControlKind::Loop => {
                            let mut v = vec![Vec::new()];
                            for _ in 0..c.count.unwrap_or(1).max(1) {
                                v = v.iter().flat_map(|pre| body.iter().map(move |b| [pre.clone(), b.clone()].concat())).collect();
                            }
                            v
                        }
                    };
                    i = c.end + 1;
                    pieces
                }
                None => {
                    i += 1;
                    vec![vec![i - 1]]
                }
            };
            paths = paths.iter().flat_map(|pre| pieces.iter().map(move |b| [pre.clone(), b.clone()].concat())).collect();
        }
        paths
    }
    if program.instructions.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = range(program, 0, program.instructions.len() - 1, None);
    out.sort();
    out.dedup();
    out
}

struct Live {
    name: String,
    defined_at: usize,
    emitted: bool,
}

/// R by enumeration: (i, j) when some path carries a definition made at i,
/// unkilled, to an instruction j != i that consumes it.
pub fn reaching_pairs(program: &DslProgram) -> BTreeSet<(usize, usize)> {
    let mut pairs = BTreeSet::new();
    for path in execution_paths(program) {
        let mut live: Vec<Live> = Vec::new();
        for &i in &path {
            let instr = &program.instructions[i];
            // references resolve against memory before the instruction;
            // a raw name with nothing live enters as a fresh reagent
            let mut fresh_inputs = 0;
            let mut fresh_targets = 0;
            let refs = |slot: &str, fresh: &mut usize| -> Vec<usize> {
                let (name, raw) = match instr.get(slot) {
                    Some(Value::Text(t)) => (t, true),
                    Some(Value::Symbol(s)) => (s, false),
                    _ => return Vec::new(),
                };
                let hits: Vec<usize> = (0..live.len()).filter(|&k| live[k].name == *name).collect();
                if hits.is_empty() && raw {
                    *fresh += 1;
                }
                hits
            };
            let inputs = refs("slot", &mut fresh_inputs);
            let targets = refs("target", &mut fresh_targets);
            let emit = instr.get("emit").map(Value::plain);
            let mut killed: BTreeSet<usize> = inputs.into_iter().collect();
            if emit.is_some() {
                killed.extend(targets);
            } else if fresh_targets > 0 {
                // a fresh target carries on under its own name
                if let Some(Value::Text(t)) = instr.get("target") {
                    live.push(Live { name: t.clone(), defined_at: i, emitted: false });
                }
            }
            for &k in &killed {
                if live[k].defined_at != i {
                    pairs.insert((live[k].defined_at, i));
                }
            }
            let mut k = 0;
            live.retain(|_| {
                k += 1;
                !killed.contains(&(k - 1))
            });
            if let Some(name) = emit {
                live.retain(|r| !(r.emitted && r.name == name));
                live.push(Live { name, defined_at: i, emitted: true });
            }
        }
    }
    pairs
}
