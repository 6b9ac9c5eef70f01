use super::*;
use crate::dsl::load_dsl_spec;
use crate::preprocess::{preprocess, MatchConfig};
use crate::program::{Binding, Call, ControlBlock};
use crate::synthesis::{detect_control_flow, synthesize, SynthesisConfig};

fn spec(name: &str) -> DslSpec {
    load_dsl_spec(format!("{}/fixtures/specs/{name}.toml", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn listing(src: &str) -> DslProgram {
    DslProgram::from_listing(src).unwrap()
}

fn compile(text: &str, spec: &DslSpec) -> DslProgram {
    let gw = ExtractorGateway::rule();
    let pre = preprocess(text, spec, &gw, &MatchConfig::default()).unwrap();
    let syn = synthesize(&pre.sequence, spec, &SynthesisConfig::default()).unwrap();
    let mut p = detect_control_flow(&syn.sequence, syn.program, spec);
    p.product = pre.protocol.metadata.product.clone();
    let p = link_program(&p, spec, &gw).unwrap();
    let p = complete_preconditions(&p, spec, &gw).unwrap();
    let p = complete_parameters(&p, spec, &gw);
    complete_termination(&p, spec)
}

#[test]
fn pasta_links_into_twelve_steps() {
    let spec = spec("cooking");
    let text = std::fs::read_to_string(format!("{}/fixtures/protocols/pasta_bolognese.txt", env!("CARGO_MANIFEST_DIR"))).unwrap();
    let p = compile(&text, &spec);
    assert_eq!(
        p.actions(),
        vec!["add", "heat", "saute", "add", "heat", "add", "heat", "fry", "boil", "add", "add", "simmer"],
        "{}",
        p.to_listing()
    );
    let gw = ExtractorGateway::rule();
    let flow = analyze_flow(&p, &spec, &gw).unwrap();
    assert!(flow.accept, "{:?}\n{}", flow.dangling, p.to_listing());
    assert!(p.instructions.iter().all(|i| !i.bindings.iter().any(|b| b.value.is_unresolved())), "{}", p.to_listing());
}

#[test]
fn defines_follow_emit_or_convention() {
    let spec = spec("chemistry");
    let p = listing(r#"add(slot = "water", target = "flask", emit = mixture_1); heat(target = mixture_1, temperature = 70C);"#);
    assert_eq!(defines(&p.instructions[0], &spec, 1), vec!["mixture_1"]);
    assert!(defines(&p.instructions[1], &spec, 2).is_empty());
}

#[test]
fn transfer_kills_and_redefines() {
    let spec = spec("chemistry");
    let gw = ExtractorGateway::rule();
    let memory = vec![ReagentRecord {
        id: "mixture_3".into(),
        name: "mixture_3".into(),
        defined_at: 0,
        origin: RecordOrigin::Emitted,
        quantity: None,
        container: Some("flask".into()),
    }];
    let p = listing(r#"transfer(target = mixture_3, destination = "beaker");"#);
    assert_eq!(kills(&memory, &p.instructions[0], &spec, &gw).unwrap(), vec!["mixture_3"]);
}

#[test]
fn minimal_chain_accepts() {
    let spec = spec("chemistry");
    let gw = ExtractorGateway::rule();
    let p = listing(
        r#"add(slot = "water", target = "flask", emit = x); centrifuge(target = x, speed = 3000rpm, duration = 5mins); transfer(target = x, destination = "tube", emit = y); yield "y";"#,
    );
    let flow = analyze_flow(&p, &spec, &gw).unwrap();
    assert!(flow.accept, "{:?}", flow);
    assert!(flow.dependences.contains(&(0, 2)));
    assert!(flow.dependences.iter().all(|(d, k)| d < k));
}

#[test]
fn dangling_intermediate_rejects() {
    let spec = spec("chemistry");
    let gw = ExtractorGateway::rule();
    let mut p = listing(r#"add(slot = "water", target = "flask", emit = x); add(slot = "salt", target = x, emit = y); yield "y";"#);
    p.delete(1);
    let flow = analyze_flow(&p, &spec, &gw).unwrap();
    assert!(!flow.accept);
    assert_eq!(flow.dangling, vec!["x"]);
}

#[test]
fn empty_program_accepts_with_unit_locality() {
    let spec = spec("chemistry");
    let flow = analyze_flow(&DslProgram::default(), &spec, &ExtractorGateway::rule()).unwrap();
    assert!(flow.accept);
    assert_eq!(locality_statistic(&flow, &DslProgram::default()), 1.0);
}

#[test]
fn disabled_instruction_is_illegal() {
    let spec = spec("chemistry");
    let p = listing(r#"add(slot = "water", target = "flask", emit = x); heat(target = x, temperature = 70C);"#);
    let mut m = PdaMachine::new(&p);
    let err = m.transition(1, &p.instructions[1], &spec, &ExtractorGateway::rule()).unwrap_err();
    assert_eq!(err, FlowError::IllegalTransition { index: 1, op: "heat".into() });
    m.transition(0, &p.instructions[0], &spec, &ExtractorGateway::rule()).unwrap();
    assert_eq!(m.enabled, BTreeSet::from([1]));
}

#[test]
fn branch_join_keeps_both_paths() {
    let spec = spec("chemistry");
    let gw = ExtractorGateway::rule();
    let mut p = listing(
        r#"add(slot = "water", target = "flask", emit = x); add(slot = "salt", target = x, emit = x); transfer(target = x, destination = "tube", emit = y); yield "y";"#,
    );
    p.controls.push(ControlBlock {
        kind: ControlKind::Branch,
        signal: "if".into(),
        predicate: "cloudy".into(),
        count: None,
        start: 1,
        end: 1,
    });
    let flow = analyze_flow(&p, &spec, &gw).unwrap();
    assert!(flow.dependences.contains(&(0, 1)));
    assert!(flow.dependences.contains(&(0, 2)));
    assert!(flow.dependences.contains(&(1, 2)));
    assert!(flow.accept, "{:?}", flow.dangling);
}

#[test]
fn completion_is_idempotent_and_masks_key_parameters() {
    let spec = spec("chemistry");
    let gw = ExtractorGateway::rule();
    let p = listing(
        r#"add(slot = "water", target = "flask", emit = x); heat(target = x, temperature = "room temperature"); centrifuge(target = x);"#,
    );
    let once = complete_parameters(&p, &spec, &gw);
    let twice = complete_parameters(&once, &spec, &gw);
    assert_eq!(once, twice);
    let t = once.instructions[1].get("temperature").unwrap();
    assert_eq!(t, &Value::Quantity(Quantity::range(20.0, 25.0, "C")));
    let flags: Vec<_> = once.flags.iter().filter(|f| f.instruction == Some(2)).collect();
    assert_eq!(flags.len(), 2, "{flags:?}");
    assert_eq!(once.instructions[2].get("speed"), Some(&Value::Mask));
}

#[test]
fn continuous_step_without_end_gets_stop() {
    let spec = spec("cooking");
    let p = listing(r#"heat(target = "water", temperature = 300F); boil(target = "pasta", temperature = 212F, duration = 8mins);"#);
    let p = complete_termination(&p, &spec);
    assert_eq!(p.instructions[0].get("postcond"), Some(&Value::Call(Call { name: "stop".into(), args: Vec::new() })));
    assert_eq!(p.instructions[1].get("postcond"), None);
}

#[test]
fn waiting_on_absorbed_reagent_repeats_cooking() {
    let spec = spec("cooking");
    let gw = ExtractorGateway::rule();
    let p = listing(
        r#"add(slot = "oil", target = "pot", emit = mixture_1);
        heat(target = mixture_1, temperature = 300F, duration = 2mins);
        add(slot = "beef", target = mixture_1, emit = mixture_2);
        boil(target = "pasta", temperature = 212F);
        add(precond = check_done(target = "beef"), slot = "carrots", target = mixture_2, emit = mixture_3);"#,
    );
    let out = complete_preconditions(&p, &spec, &gw).unwrap();
    assert_eq!(out.actions(), vec!["add", "heat", "add", "heat", "boil", "add"]);
    let copy = &out.instructions[3];
    assert_eq!(copy.get("duration"), None);
    assert_eq!(
        copy.get("postcond"),
        Some(&Value::Call(Call { name: "check_done".into(), args: vec![Binding::new("target", Value::text("beef"))] }))
    );
    assert_eq!(complete_preconditions(&out, &spec, &gw).unwrap(), out);
}
