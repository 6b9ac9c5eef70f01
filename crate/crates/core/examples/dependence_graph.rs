//! Build the protocol dependence graph, check its duality and export DOT.
//!
//! cargo run --example dependence_graph > pdg.dot

use protoflow::dsl::load_dsl_spec;
use protoflow::extractor::ExtractorGateway;
use protoflow::flow::analyze_flow;
use protoflow::pdg::{build_pdg, check_duality, to_dot};
use protoflow::program::DslProgram;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = load_dsl_spec(format!("{FIXTURES}/specs/cooking.toml"))?;
    let program = DslProgram::from_listing(&std::fs::read_to_string(format!("{FIXTURES}/corpus/cooking/07_stir_fry.listing"))?)?;
    let flow = analyze_flow(&program, &spec, &ExtractorGateway::rule())?;
    let pdg = build_pdg(&program, &flow, &spec.name, 0)?;
    let duality = check_duality(&pdg);
    eprintln!(
        "{} op nodes, {} op edges, {} reagent nodes; duality holds: {}",
        pdg.op_nodes.len(),
        pdg.op_edges.len(),
        pdg.reagent_nodes.len(),
        duality.holds()
    );
    print!("{}", to_dot(&pdg));
    Ok(())
}
