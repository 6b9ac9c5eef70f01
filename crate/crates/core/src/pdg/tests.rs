use super::*;
use crate::dsl::{load_dsl_spec, DslSpec};
use crate::extractor::ExtractorGateway;
use crate::flow::analyze_flow;

const CHAIN: &str = r#"
name = "chain"
start = "program"

[variables]
ctrl = []
op = ["make", "use"]
cond = []
par = ["target", "emit"]

[terminals]
classes = ["string", "symbol"]

[[productions]]
lhs = "program"
rhs = ["make program", "use program", ""]

[[productions]]
lhs = "make"
rhs = ["emit?"]

[[productions]]
lhs = "use"
rhs = ["target"]

[[productions]]
lhs = "target"
rhs = ["symbol"]

[[productions]]
lhs = "emit"
rhs = ["symbol"]

[semantics.operations.make]
effect = "combine"

[semantics.operations.use]
effect = "consume"

[semantics.parameters.target]
role = "target"

[semantics.parameters.emit]
role = "output"
"#;

fn chain() -> (DslSpec, DslProgram) {
    let spec = DslSpec::from_toml_str(CHAIN).unwrap();
    (spec, DslProgram::from_listing("make(emit = x); use(target = x);").unwrap())
}

fn pdg_of(spec: &DslSpec, p: &DslProgram) -> Pdg {
    let flow = analyze_flow(p, spec, &ExtractorGateway::rule()).unwrap();
    build_pdg(p, &flow, &spec.name, 7).unwrap()
}

#[test]
fn minimal_chain() {
    let (spec, p) = chain();
    let pdg = pdg_of(&spec, &p);
    assert_eq!(pdg.op_nodes.len(), 2);
    assert_eq!(pdg.op_edges.len(), 1);
    assert_eq!(pdg.op_edges[0].reagent.as_deref(), Some("x"));
    assert_eq!(pdg.reagent_nodes.len(), 1);
    assert_eq!(pdg.reagent_edges[0].to, vec!["x"]);
    assert_eq!(pdg.reagent_edges[1].from, vec!["x"]);
    assert!(check_duality(&pdg).holds());

    let dot = to_dot(&pdg);
    let nodes = dot.lines().filter(|l| l.contains("[shape=")).count();
    let edges = dot.lines().filter(|l| l.contains(" -> ")).count();
    assert_eq!((nodes, edges), (3, 3), "{dot}");
}

#[test]
fn json_round_trip_keeps_keys() {
    let (spec, p) = chain();
    let pdg = pdg_of(&spec, &p);
    let json = to_json(&pdg);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    for key in ["op_nodes", "op_edges", "reagent_nodes", "reagent_edges", "cross_links", "meta"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["meta"]["seed"], 7);
    assert_eq!(from_json(&json).unwrap(), pdg);
}

#[test]
fn deleting_a_reagent_node_breaks_duality() {
    let (spec, p) = chain();
    let mut pdg = pdg_of(&spec, &p);
    pdg.reagent_nodes.clear();
    let report = check_duality(&pdg);
    assert!(!report.holds());
    assert!(report.problems.iter().any(|p| p.contains("missing reagent node `x`")));
}

#[test]
fn mismatched_flow_is_rejected() {
    let (spec, p) = chain();
    let flow = analyze_flow(&p, &spec, &ExtractorGateway::rule()).unwrap();
    let shorter = DslProgram::from_listing("make(emit = x);").unwrap();
    assert!(matches!(build_pdg(&shorter, &flow, "chain", 0), Err(PdgError::InconsistentInputs(_))));
}

#[test]
fn empty_program_gives_empty_graphs() {
    let (spec, _) = chain();
    let pdg = pdg_of(&spec, &DslProgram::default());
    assert!(pdg.op_nodes.is_empty() && pdg.reagent_nodes.is_empty());
    assert!(check_duality(&pdg).holds());
}

#[test]
fn pasta_graph_is_dual() {
    let spec = load_dsl_spec(format!("{}/fixtures/specs/cooking.toml", env!("CARGO_MANIFEST_DIR"))).unwrap();
    let p = DslProgram::from_listing(
        r#"add(slot = "oil", target = "pot", emit = mixture_1);
        heat(target = mixture_1, temperature = 300F);
        add(slot = "beef", target = mixture_1, emit = mixture_2);
        yield "mixture_2";"#,
    )
    .unwrap();
    let pdg = pdg_of(&spec, &p);
    assert!(check_duality(&pdg).holds(), "{:?}", check_duality(&pdg));
    let carrying: Vec<_> = pdg.op_edges.iter().filter(|e| e.reagent.is_some()).map(|e| (e.from, e.to, e.kind)).collect();
    assert_eq!(carrying, vec![(0, 2, EdgeKind::Dependence)]);
    assert_eq!(pdg.op_edges.iter().filter(|e| e.kind == EdgeKind::Sequential).count(), 2);
}
