use super::*;
use crate::dsl::load_dsl_spec;

const DECLS: &str = r#"
attributes = ["heat-sensitive", "heat-stable"]

[containers]
flask = "50 mL"

[reagents]
"sodium borohydride" = ["heat-sensitive"]
"sodium chloride" = ["heat-stable"]

[[rules]]
name = "no-hot-borohydride"
trigger = ["heat"]
guard = "contents has heat-sensitive and temperature > 60 C"
message = "heat-sensitive contents heated above 60 C"
"#;

fn chemistry() -> DslSpec {
    load_dsl_spec(format!("{}/fixtures/specs/chemistry.toml", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn model_of(listing: &str, decls: &str) -> ExecutionModel {
    let spec = chemistry();
    let program = DslProgram::from_listing(listing).unwrap();
    let flow = analyze_flow(&program, &spec, &ExtractorGateway::rule()).unwrap();
    let pdg = build_pdg(&program, &flow, &spec.name, 0).unwrap();
    let d = Declarations::from_toml_str(decls).unwrap();
    make_model(&program, &pdg, &d.rules, &d.resources, &spec).unwrap()
}

const OVERFILL: &str = r#"add(slot = "water", volume = 35 mL, target = "flask", emit = mixture_1);
add(slot = "ethanol", volume = 25 mL, target = mixture_1, emit = mixture_2);"#;

#[test]
fn overfilled_flask_is_a_spatial_violation() {
    let model = model_of(OVERFILL, DECLS);
    let (trace, violations) = simulate(&model, 1).unwrap();
    assert_eq!(track_capacity(&trace).get("flask").copied(), Some(60.0));
    let spatial: Vec<_> = violations.iter().filter(|v| v.kind == ConstraintKind::Spatial).collect();
    assert_eq!(spatial.len(), 1, "{violations:?}");
    assert_eq!(spatial[0].step, 1);
    assert!(!fully_satisfied(&model, &trace, &violations));
}

#[test]
fn split_halves_the_volume() {
    let listing = format!("{OVERFILL}\ntransfer(target = mixture_2, destination = \"flasks\", parts = 2);");
    let model = model_of(&listing, "");
    let (trace, violations) = simulate(&model, 0).unwrap();
    let caps = track_capacity(&trace);
    assert_eq!(caps.get("flask 1").copied(), Some(30.0));
    assert_eq!(caps.get("flask 2").copied(), Some(30.0));
    assert!(violations.is_empty(), "{violations:?}");
    assert!(fully_satisfied(&model, &trace, &violations));
}

#[test]
fn heating_sensitive_contents_violates_the_rule() {
    let hot = r#"add(slot = "sodium borohydride", volume = 10 mL, target = "flask", emit = mixture_1);
heat(target = mixture_1, temperature = 70C);"#;
    let (_, violations) = simulate(&model_of(hot, DECLS), 0).unwrap();
    let temporal: Vec<_> = violations.iter().filter(|v| v.kind == ConstraintKind::Temporal).collect();
    assert_eq!(temporal.len(), 1);
    assert_eq!(temporal[0].subject, "no-hot-borohydride");
    assert_eq!(temporal[0].instruction, 1);

    let stable = hot.replace("sodium borohydride", "sodium chloride");
    let (trace, violations) = simulate(&model_of(&stable, DECLS), 0).unwrap();
    assert!(violations.is_empty());
    assert!(check_safety(&trace, &model_of(hot, DECLS)).is_empty(), "safety depends on the trace contents");
}

#[test]
fn whatif_reports_both_directions() {
    let hot = r#"add(slot = "sodium borohydride", volume = 10 mL, target = "flask", emit = mixture_1);
heat(target = mixture_1, temperature = 70C);"#;
    let model = model_of(hot, DECLS);
    let cooler: InstructionEdit = "set 1 temperature=40C".parse().unwrap();
    let delta = whatif(&model, &cooler, 0).unwrap();
    assert_eq!((delta.added.len(), delta.removed.len()), (0, 1));

    let cool = model_of(&hot.replace("70C", "40C"), DECLS);
    let hotter: InstructionEdit = "set 1 temperature=90C".parse().unwrap();
    let delta = whatif(&cool, &hotter, 0).unwrap();
    assert_eq!((delta.added.len(), delta.removed.len()), (1, 0));

    let noop: InstructionEdit = "set 1 temperature=70C".parse().unwrap();
    assert!(whatif(&model, &noop, 0).unwrap().is_empty());
}

#[test]
fn invalid_edits_are_rejected() {
    let model = model_of(OVERFILL, DECLS);
    assert!(matches!("frobnicate 1".parse::<InstructionEdit>(), Err(ExecutionError::InvalidEdit(_))));
    assert!(matches!(whatif(&model, &InstructionEdit::Delete { index: 9 }, 0), Err(ExecutionError::InvalidEdit(_))));
    let bad = InstructionEdit::Set { index: 0, slot: "temperature".into(), value: "\"hot\"".into() };
    assert!(matches!(whatif(&model, &bad, 0), Err(ExecutionError::InvalidEdit(_))));
}

#[test]
fn edits_parse() {
    assert_eq!(
        "insert 1 heat(target = x, temperature = 70C)".parse::<InstructionEdit>().unwrap(),
        InstructionEdit::Insert { index: 1, instruction: "heat(target = x, temperature = 70C)".into() }
    );
    assert_eq!("delete 0".parse::<InstructionEdit>().unwrap(), InstructionEdit::Delete { index: 0 });
}

#[test]
fn empty_program_is_trivially_satisfied() {
    let model = model_of("", DECLS);
    let (trace, violations) = simulate(&model, 0).unwrap();
    assert!(trace.steps.is_empty() && violations.is_empty());
    assert!(fully_satisfied(&model, &trace, &violations));
}

#[test]
fn constraint_sets_cover_every_kind() {
    let model = model_of(OVERFILL, DECLS);
    assert_eq!(model.constraints_of(ConstraintKind::Order).count(), 1);
    assert_eq!(model.constraints_of(ConstraintKind::Flow).count(), 1);
    assert_eq!(model.constraints_of(ConstraintKind::Spatial).count(), 1);
    assert_eq!(model.constraints_of(ConstraintKind::Temporal).count(), 1);
}

#[test]
fn unknown_attribute_does_not_compile() {
    let d = Declarations::from_toml_str("[[rules]]\nname = \"r\"\ntrigger = \"*\"\nguard = \"contents has radioactive\"").unwrap();
    let err = compile_rules(&d.rules, &d.resources).unwrap_err();
    assert!(matches!(err, ExecutionError::RuleCompile { ref rule, .. } if rule == "r"));
}

#[test]
fn reversed_prefix_is_not_partially_satisfying() {
    let model = model_of(OVERFILL, "");
    let (trace, _) = simulate(&model, 0).unwrap();
    assert!(check_partial(&trace, &model).partially_satisfying);
    let mut reversed = trace.clone();
    reversed.steps.reverse();
    let verdict = check_partial(&reversed, &model);
    assert!(!verdict.partially_satisfying);
    assert_eq!(verdict.broken_pairs, vec![(1, 0)]);
}

#[test]
fn loops_unroll_by_count() {
    let spec = chemistry();
    let mut program = DslProgram::from_listing(
        r#"add(slot = "water", volume = 5 mL, target = "beaker", emit = mixture_1);
stir(target = mixture_1, duration = 60 s);"#,
    )
    .unwrap();
    program.controls.push(crate::program::ControlBlock {
        kind: ControlKind::Loop,
        signal: "repeat".into(),
        predicate: String::new(),
        count: Some(3),
        start: 1,
        end: 1,
    });
    let flow = analyze_flow(&program, &spec, &ExtractorGateway::rule()).unwrap();
    let pdg = build_pdg(&program, &flow, &spec.name, 0).unwrap();
    let model = make_model(&program, &pdg, &[], &ResourceDeclarations::default(), &spec).unwrap();
    let (trace, violations) = simulate(&model, 0).unwrap();
    assert_eq!(trace.steps.iter().map(|s| s.instruction).collect::<Vec<_>>(), vec![0, 1, 1, 1]);
    assert_eq!(trace.steps.last().unwrap().context.elapsed_s, 180.0);
    assert!(violations.is_empty(), "{violations:?}");
}

#[test]
fn deleting_the_second_addition_clears_capacity() {
    let model = model_of(OVERFILL, DECLS);
    let delta = whatif(&model, &InstructionEdit::Delete { index: 1 }, 0).unwrap();
    assert!(delta.added.is_empty());
    assert_eq!(delta.removed.iter().map(|v| v.kind).collect::<Vec<_>>(), vec![ConstraintKind::Spatial]);
}

#[test]
fn overfilled_prefix_is_flagged_irrecoverable() {
    let model = model_of(OVERFILL, DECLS);
    let (trace, _) = simulate(&model, 0).unwrap();
    let verdict = check_partial(&trace, &model);
    assert!(verdict.partially_satisfying);
    assert_eq!(verdict.irrecoverable.iter().filter(|v| v.kind == ConstraintKind::Spatial).count(), 1);
}

#[test]
fn volume_changes_only_by_additions() {
    let listing = format!(
        "{OVERFILL}\ntransfer(target = mixture_2, destination = \"flasks\", parts = 2);\nheat(target = mixture_2, temperature = 50C);"
    );
    let model = model_of(&listing, "");
    let (trace, _) = simulate(&model, 0).unwrap();
    let mut total = 0.0;
    for s in &trace.steps {
        let now: f64 = s.context.containers.values().map(|c| c.volume_ml).sum();
        assert!((now - total - s.added_ml).abs() < 1e-9, "step {}: {now} vs {total} + {}", s.instruction, s.added_ml);
        assert!(s.context.containers.values().all(|c| c.volume_ml >= 0.0));
        total = now;
    }
    assert_eq!(total, 60.0);
}

#[test]
fn simulation_is_reproducible() {
    let model = model_of(OVERFILL, DECLS);
    let a = serde_json::to_string(&simulate(&model, 5).unwrap()).unwrap();
    let b = serde_json::to_string(&simulate(&model, 5).unwrap()).unwrap();
    assert_eq!(a, b);
}
