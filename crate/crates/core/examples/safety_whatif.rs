//! Safety rules over container contents, and a counterfactual edit.
//!
//! cargo run --example safety_whatif

use protoflow::dsl::load_dsl_spec;
use protoflow::execution::{make_model, run_report, whatif, Declarations, InstructionEdit};
use protoflow::extractor::ExtractorGateway;
use protoflow::flow::analyze_flow;
use protoflow::pdg::build_pdg;
use protoflow::program::DslProgram;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = load_dsl_spec(format!("{FIXTURES}/specs/chemistry.toml"))?;
    let decls = Declarations::load(format!("{FIXTURES}/declarations/heat_safety.toml"))?;
    let program = DslProgram::from_listing(
        r#"add(slot = "sodium borohydride", mass = 2 g, target = "water", container = "flask", emit = mixture_1);
heat(target = mixture_1, temperature = 70C);"#,
    )?;
    let flow = analyze_flow(&program, &spec, &ExtractorGateway::rule())?;
    let pdg = build_pdg(&program, &flow, &spec.name, 0)?;
    let model = make_model(&program, &pdg, &decls.rules, &decls.resources, &spec)?;

    let report = run_report(&model, 0)?;
    print!("{}", report.to_text());

    let edit: InstructionEdit = "set 1 temperature=40C".parse()?;
    let delta = whatif(&model, &edit, 0)?;
    println!("after `{edit:?}`: {} added, {} removed", delta.added.len(), delta.removed.len());
    for v in &delta.removed {
        println!("  resolved: {v}");
    }
    Ok(())
}
