use super::*;
use crate::program::{DslProgram, Instruction, Value};

const MINIMAL: &str = r#"
name = "mini"
start = "program"

[variables]
op = ["add"]
par = ["slot", "target", "emit"]

[terminals]
classes = ["string", "symbol"]

[[productions]]
lhs = "program"
rhs = ["add program", ""]

[[productions]]
lhs = "add"
rhs = ["slot target emit"]

[semantics.parameters.slot]
role = "input"
labels = ["reagent"]

[semantics.parameters.target]
role = "target"
labels = ["reagent", "container"]

[semantics.parameters.emit]
role = "output"
"#;

fn fixture(name: &str) -> DslSpec {
    let path = format!("{}/fixtures/specs/{name}.toml", env!("CARGO_MANIFEST_DIR"));
    load_dsl_spec(path).unwrap()
}

#[test]
fn minimal_spec_has_one_operation() {
    let spec = DslSpec::from_toml_str(MINIMAL).unwrap();
    assert_eq!(spec.operations().count(), 1);
    let add = spec.operation("add").unwrap();
    assert_eq!(add.patterns.len(), 1);
    assert!(add.slots.iter().all(|s| s.required));
}

#[test]
fn dangling_condition_is_named() {
    let src = MINIMAL.replace(r#"rhs = ["slot target emit"]"#, r#"rhs = ["slot target Temperature? emit"]"#);
    match DslSpec::from_toml_str(&src) {
        Err(DslError::SpecValidation { symbol, .. }) => assert_eq!(symbol, "Temperature"),
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn malformed_file_is_a_parse_error() {
    assert!(matches!(DslSpec::from_toml_str("name = "), Err(DslError::SpecParse(_))));
}

#[test]
fn unsatisfiable_arity_is_rejected() {
    let src = MINIMAL.replace("role = \"input\"", "role = \"input\"\nmin_arity = 3\nmax_arity = 2");
    match DslSpec::from_toml_str(&src) {
        Err(DslError::SpecValidation { symbol, .. }) => assert_eq!(symbol, "slot"),
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn bundled_specs_load() {
    let chem = fixture("chemistry");
    let names: Vec<&str> = chem.operations().map(|o| o.name.as_str()).collect();
    assert_eq!(names, ["add", "centrifuge", "heat", "stir", "transfer"]);
    let cooking = fixture("cooking");
    assert_eq!(cooking.operations().count(), 6);
}

#[test]
fn optional_third_input_gives_two_patterns() {
    let src = MINIMAL
        .replace(r#"par = ["slot", "target", "emit"]"#, r#"par = ["slot", "target", "additive", "emit"]"#)
        .replace(r#"rhs = ["slot target emit"]"#, r#"rhs = ["slot target additive? emit"]"#);
    let spec = DslSpec::from_toml_str(&src).unwrap();
    let add = spec.operation("add").unwrap();
    let pats = enumerate_patterns(add, &spec);
    assert_eq!(pats.len(), 2);
    let lens: Vec<usize> = pats.iter().map(|p| p.len()).collect();
    assert!(lens.contains(&3) && lens.contains(&4));
}

#[test]
fn three_optional_conditions_give_eight_patterns() {
    let src = MINIMAL
        .replace(r#"par = ["slot", "target", "emit"]"#, r#"par = ["slot", "target", "emit", "a", "b", "c"]"#)
        .replace(r#"op = ["add"]"#, "op = [\"add\"]\ncond = [\"A\", \"B\", \"C\"]")
        .replace(r#"rhs = ["slot target emit"]"#, r#"rhs = ["slot target emit A? B? C?"]"#)
        + r#"
[[productions]]
lhs = "A"
rhs = ["a"]
[[productions]]
lhs = "B"
rhs = ["b"]
[[productions]]
lhs = "C"
rhs = ["c"]
"#;
    let spec = DslSpec::from_toml_str(&src).unwrap();
    let pats = spec.operation("add").unwrap().patterns.clone();
    assert_eq!(pats.len(), 8);
    let mut sorted = pats.clone();
    sorted.sort_by(|x, y| x.slot_names().collect::<Vec<_>>().cmp(&y.slot_names().collect::<Vec<_>>()));
    assert_eq!(pats, sorted);
}

#[test]
fn pattern_cap_is_enforced() {
    let params: Vec<String> = (0..13).map(|i| format!("p{i}")).collect();
    let src = MINIMAL
        .replace(
            r#"par = ["slot", "target", "emit"]"#,
            &format!(
                "par = [\"slot\", \"target\", \"emit\", {}]",
                params.iter().map(|p| format!("\"{p}\"")).collect::<Vec<_>>().join(", ")
            ),
        )
        .replace(
            r#"rhs = ["slot target emit"]"#,
            &format!("rhs = [\"slot target emit {}\"]", params.iter().map(|p| format!("{p}?")).collect::<Vec<_>>().join(" ")),
        );
    assert!(matches!(DslSpec::from_toml_str(&src), Err(DslError::SpecValidation { .. })));
}

#[test]
fn constraints_restrict_patterns() {
    let src = MINIMAL
        .replace(r#"par = ["slot", "target", "emit"]"#, r#"par = ["slot", "target", "emit", "x", "y"]"#)
        .replace(r#"rhs = ["slot target emit"]"#, r#"rhs = ["slot target emit x? y?"]"#)
        + "\n[[semantics.constraints]]\noperation = \"add\"\nrequires = [\"x\", \"y\"]\n";
    let spec = DslSpec::from_toml_str(&src).unwrap();
    // {}, {y}, {x,y}; {x} alone is excluded
    assert_eq!(spec.operation("add").unwrap().patterns.len(), 3);
}

#[test]
fn loads_are_deterministic() {
    assert_eq!(fixture("cooking"), fixture("cooking"));
}

#[test]
fn missing_target_is_one_violation() {
    let spec = DslSpec::from_toml_str(MINIMAL).unwrap();
    let p = DslProgram::new(vec![Instruction::new("add").with("slot", Value::text("oil")).with("emit", Value::symbol("m1"))]);
    let report = validate_program(&p, &spec);
    let v: Vec<_> = report.violations().collect();
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].instruction, 0);
    assert_eq!(v[0].slot.as_deref(), Some("target"));
    assert_eq!(v[0].kind, ViolationKind::MissingRequiredSlot);
}

#[test]
fn valid_and_invalid_programs() {
    let spec = fixture("cooking");
    let ok = DslProgram::new(vec![
        Instruction::new("add").with("slot", Value::text("oil")).with("target", Value::text("pan")),
        Instruction::new("heat").with("target", Value::symbol("mixture_1")).with("temperature", Value::Missing),
    ]);
    assert!(validate_program(&ok, &spec).is_verified());

    let bad = DslProgram::new(vec![
        Instruction::new("whisk"),
        Instruction::new("add").with("slot", Value::text("oil")).with("target", Value::text("pan")).with("colour", Value::text("red")),
        Instruction::new("heat").with("target", Value::text("x")).with("temperature", Value::text("hot")),
    ]);
    let kinds: Vec<ViolationKind> = validate_program(&bad, &spec).violations().map(|v| v.kind).collect();
    assert_eq!(kinds, [ViolationKind::UnknownOperation, ViolationKind::UnknownSlot, ViolationKind::ValueClass]);
}

#[test]
fn noop_placeholders_pass() {
    let spec = fixture("cooking");
    let p = DslProgram::new(vec![Instruction::new(crate::program::NOOP)]);
    assert!(validate_program(&p, &spec).is_verified());
}

#[test]
fn slot_aliases_resolve() {
    let spec = fixture("cooking");
    assert_eq!(spec.canonical_slot("postcon"), "postcond");
    assert_eq!(spec.canonical_slot("target"), "target");
}

#[test]
fn aliases_are_typed_quantities() {
    let spec = fixture("chemistry");
    let q = spec.alias_for("temperature", "Room Temperature").unwrap();
    assert_eq!(q.to_string(), "20-25C");
}
