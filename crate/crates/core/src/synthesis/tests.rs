use proptest::prelude::*;
use rand::SeedableRng;

use super::*;
use crate::dsl::{load_dsl_spec, validate_program};
use crate::extractor::ExtractorGateway;
use crate::preprocess::{preprocess, MatchConfig, OpCandidate, Svo};
use crate::program::{ControlBlock, ControlKind};

fn spec(name: &str) -> DslSpec {
    load_dsl_spec(format!("{}/fixtures/specs/{name}.toml", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

const TITRATION: &str = r#"
name = "titration"
start = "program"

[variables]
ctrl = ["loop", "branch"]
op = ["titrate", "record"]
cond = []
par = ["target", "emit"]

[terminals]
classes = ["string", "symbol"]

[[productions]]
lhs = "program"
rhs = ["titrate program", "record program", "loop program", "branch program", ""]

[[productions]]
lhs = "loop"
rhs = ["program"]

[[productions]]
lhs = "branch"
rhs = ["program"]

[[productions]]
lhs = "titrate"
rhs = ["target? emit?"]

[[productions]]
lhs = "record"
rhs = ["target?"]

[[productions]]
lhs = "target"
rhs = ["string", "symbol"]

[[productions]]
lhs = "emit"
rhs = ["symbol"]

[semantics.parameters.target]
role = "target"
labels = ["reagent", "volume", "other"]

[semantics.parameters.emit]
role = "output"
"#;

fn run(text: &str, spec: &DslSpec) -> (EntitySequence, Synthesis) {
    let pre = preprocess(text, spec, &ExtractorGateway::rule(), &MatchConfig::default()).unwrap();
    let syn = synthesize(&pre.sequence, spec, &SynthesisConfig::default()).unwrap();
    (pre.sequence, syn)
}

fn unit(text: &str, op: &str, entities: Vec<Entity>) -> ActionUnit {
    let mut u = ActionUnit::placeholder(0, (0, text.len()), text);
    u.kind = UnitKind::Operation;
    u.candidates = vec![OpCandidate { operation: op.into(), score: 1.0 }];
    u.entities = entities;
    u
}

fn ent(surface: &str, label: Label, svo: Svo) -> Entity {
    let mut e = Entity::new(surface, (0, 0), label, 1.0);
    e.svo = Some(svo);
    e
}

#[test]
fn single_oil_step() {
    let spec = spec("cooking");
    let (_, syn) = run("Add the @oil@ to a large saucepan.", &spec);
    assert_eq!(syn.program.to_listing().trim(), r#"add(slot = "oil", target = "large saucepan");"#);
    assert!(validate_program(&syn.program, &spec).is_verified());
}

#[test]
fn empty_protocol_gives_empty_program() {
    let spec = spec("cooking");
    let syn = synthesize(&EntitySequence::default(), &spec, &SynthesisConfig::default()).unwrap();
    assert!(syn.program.is_empty());
    assert_eq!(syn.score, 0.0);
}

#[test]
fn size_prior_odds() {
    let spec = spec("cooking");
    let seq =
        EntitySequence { units: vec![unit("add the garlic", "add", vec![ent("garlic", Label::Reagent, Svo::Object)])], issues: Vec::new() };
    let cfg = SynthesisConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws = 10_000;
    let two_slot = (0..draws).filter(|_| sample_program(&seq, &spec, &cfg, &mut rng).instructions[0].get("pace").is_none()).count();
    let freq = two_slot as f64 / draws as f64;
    assert!((freq - 0.6).abs() <= 0.02, "two-slot frequency {freq}");
}

#[test]
fn unbound_entity_counts_as_unmapped() {
    let spec = spec("chemistry");
    let u = unit(
        "add water to the flask",
        "add",
        vec![
            ent("water", Label::Reagent, Svo::Object),
            ent("10 mL", Label::Volume, Svo::Setting),
            ent("flask", Label::Container, Svo::Place),
        ],
    );
    let op = spec.operation("add").unwrap();
    let (instr, _) = bind_entities(op, &["slot".into(), "target".into()], &u.entities, &spec);
    assert!(step_indicators(&instr, &u, &spec).unmapped >= 1.0);
}

#[test]
fn mislabeled_temperature_is_refined() {
    let spec = spec("chemistry");
    let u = unit(
        "heat the mixture to 80°C",
        "heat",
        vec![ent("mixture", Label::Reagent, Svo::Object), ent("80°C", Label::Other, Svo::Setting)],
    );
    let seq = EntitySequence { units: vec![u.clone()], issues: Vec::new() };
    let op = spec.operation("heat").unwrap();
    let (instr, _) = bind_entities(op, &["target".into(), "temperature".into()], &u.entities, &spec);
    let program = DslProgram::new(vec![instr]);
    let cfg = SynthesisConfig::default();
    let before = divergence(&program, &seq, &spec, &cfg).unwrap();
    let (seq2, program2) = refine_labels(&program, &seq, &spec, &cfg).unwrap();
    let after = divergence(&program2, &seq2, &spec, &cfg).unwrap();
    assert_eq!(seq2.units[0].entities[1].label, Label::Temperature);
    assert!(after < before);
    assert_eq!(program2.instructions[0].get("temperature").unwrap().plain(), "80C");

    // a fixed point stays put
    let (seq3, program3) = refine_labels(&program2, &seq2, &spec, &cfg).unwrap();
    assert_eq!((seq3, program3), (seq2, program2));
}

#[test]
fn entity_without_compatible_slot_keeps_label() {
    let spec = spec("chemistry");
    let u = unit("stir the solution", "stir", vec![ent("solution", Label::Reagent, Svo::Object), ent("gently", Label::Other, Svo::Object)]);
    let seq = EntitySequence { units: vec![u.clone()], issues: Vec::new() };
    let op = spec.operation("stir").unwrap();
    let (instr, _) = bind_entities(op, &["target".into()], &u.entities, &spec);
    let (seq2, _) = refine_labels(&DslProgram::new(vec![instr]), &seq, &spec, &SynthesisConfig::default()).unwrap();
    assert_eq!(seq2.units[0].entities[1].label, Label::Other);
}

#[test]
fn divergence_rejects_length_mismatch() {
    let spec = spec("cooking");
    let seq = EntitySequence { units: vec![unit("add oil", "add", Vec::new())], issues: Vec::new() };
    let err = divergence(&DslProgram::default(), &seq, &spec, &SynthesisConfig::default()).unwrap_err();
    assert_eq!(err, SynthesisError::LengthMismatch { program: 0, units: 1 });
}

#[test]
fn synthesis_is_deterministic_and_monotone() {
    let spec = spec("cooking");
    let text = std::fs::read_to_string(format!("{}/fixtures/protocols/pasta_bolognese.txt", env!("CARGO_MANIFEST_DIR"))).unwrap();
    let (seq, a) = run(&text, &spec);
    let (_, b) = run(&text, &spec);
    assert_eq!(a, b);
    let cfg = SynthesisConfig::default();
    assert!((divergence(&a.program, &a.sequence, &spec, &cfg).unwrap() - a.score).abs() < 1e-9);
    assert!(divergence(&a.program, &seq, &spec, &cfg).is_ok());
    for trace in &a.traces {
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
    assert!(validate_program(&a.program, &spec).is_verified());
    let carrots = &a.program.instructions[8];
    assert_eq!(carrots.get("slot").unwrap().arity(), 3);
    assert_eq!(carrots.get("target"), Some(&Value::Missing));
}

#[test]
fn once_clause_becomes_precondition() {
    let spec = spec("cooking");
    let (seq, syn) = run("Once the @beef@ is done, add the @carrots@.", &spec);
    let p = detect_control_flow(&seq, syn.program, &spec);
    assert_eq!(p.instructions.len(), 1);
    assert_eq!(p.instructions[0].get("precond").unwrap().plain(), r#"check_done(target = "beef")"#);
    assert!(p.controls.is_empty());
}

#[test]
fn repeat_until_wraps_only_the_titration() {
    let spec = DslSpec::from_toml_str(TITRATION).unwrap();
    let (seq, syn) = run("Repeat the titration until the endpoint is reached, then record the volume.", &spec);
    let p = detect_control_flow(&seq, syn.program, &spec);
    assert_eq!(p.actions(), vec!["titrate", "record"]);
    assert_eq!(p.controls.len(), 1);
    let c = &p.controls[0];
    assert_eq!((c.kind, c.start, c.end), (ControlKind::Loop, 0, 0));
    assert_eq!(c.predicate, "the endpoint is reached");
    assert!(validate_program(&p, &spec).is_verified());
}

#[test]
fn no_signal_leaves_program_unchanged() {
    let spec = spec("cooking");
    let (seq, syn) = run("Add the @oil@ to a large saucepan. Fry the @bacon@ on high heat.", &spec);
    let p = detect_control_flow(&seq, syn.program.clone(), &spec);
    assert_eq!(p, syn.program);
}

#[test]
fn unknown_verb_becomes_flagged_noop() {
    let spec = spec("cooking");
    let (_, syn) = run("Whisk the @eggs@ thoroughly.", &spec);
    assert!(syn.program.instructions.iter().all(|i| i.is_noop()));
    assert!(syn.program.flags.iter().any(|f| f.stage == Stage::Synthesis));
}

fn well_nested(controls: &[ControlBlock]) -> bool {
    controls.iter().enumerate().all(|(k, c)| {
        controls[k + 1..].iter().all(|d| {
            let disjoint = d.end < c.start || c.end < d.start;
            let nested = (c.start <= d.start && d.end <= c.end) || (d.start <= c.start && c.end <= d.end);
            disjoint || nested
        })
    })
}

proptest! {
    #[test]
    fn wrappers_always_nest(ranges in prop::collection::vec((0usize..12, 0usize..6), 1..10)) {
        let mut controls: Vec<ControlBlock> = Vec::new();
        for (start, len) in ranges {
            let (s, e) = control::nest(&controls, start, start + len);
            prop_assert!(s <= start && e >= start + len);
            controls.push(ControlBlock { kind: ControlKind::Loop, signal: "repeat".into(), predicate: String::new(), count: None, start: s, end: e });
            prop_assert!(well_nested(&controls));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn synthesized_programs_validate(picks in prop::collection::vec((0usize..4, 0usize..3, any::<bool>(), any::<bool>()), 1..5), seed in 0u64..1000) {
        let spec = spec("cooking");
        let verbs = ["Add the @garlic@ to the pot", "Heat the @sauce@", "Boil the @pasta@", "Simmer the @stock@"];
        let temps = ["", " on medium heat", " at <300 F>"];
        let text: Vec<String> = picks
            .iter()
            .map(|(v, t, d, slow)| {
                let lead = if *slow { "Slowly " } else { "" };
                let verb = if *slow { verbs[*v].to_lowercase() } else { verbs[*v].to_string() };
                format!("{lead}{verb}{}{}.", temps[*t], if *d { " for |5 minutes|" } else { "" })
            })
            .collect();
        let pre = preprocess(&text.join("\n\n"), &spec, &ExtractorGateway::rule(), &MatchConfig::default()).unwrap();
        let cfg = SynthesisConfig { seed, ..SynthesisConfig::default() };
        let syn = synthesize(&pre.sequence, &spec, &cfg).unwrap();
        let report = validate_program(&syn.program, &spec);
        prop_assert!(report.is_verified(), "{:?}\n{}", report.violations().collect::<Vec<_>>(), syn.program.to_listing());
        let p = detect_control_flow(&syn.sequence, syn.program, &spec);
        prop_assert!(validate_program(&p, &spec).is_verified());
    }
}
