//! Reagent lifecycles, the dependence set and the accept verdict of a listing.
//!
//! cargo run --example reagent_flow

use protoflow::dsl::load_dsl_spec;
use protoflow::extractor::ExtractorGateway;
use protoflow::flow::analyze_flow;
use protoflow::program::DslProgram;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = load_dsl_spec(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/specs/chemistry.toml"))?;
    let program = DslProgram::from_listing(
        r#"add(slot = "sodium chloride", mass = 2 g, target = "water", emit = brine);
heat(target = brine, temperature = 60C);
add(slot = "ethanol", volume = 5 mL, target = brine, emit = mixture_1);
transfer(target = mixture_1, destination = "vial");
yield "mixture_1";"#,
    )?;
    let flow = analyze_flow(&program, &spec, &ExtractorGateway::rule())?;
    for r in &flow.reagents {
        let killed = r.killed_at.map_or("-".to_string(), |k| k.to_string());
        println!("{:<16} defined {} killed {} terminal {}", r.id, r.defined_at, killed, r.terminal);
    }
    println!("R = {:?}", flow.dependences);
    println!("accept = {}, dangling = {:?}", flow.accept, flow.dangling);

    // dropping the consuming addition leaves the brine unused
    let mut broken = program.clone();
    broken.delete(2);
    let flow = analyze_flow(&broken, &spec, &ExtractorGateway::rule())?;
    println!("without instruction 2: accept = {}, dangling = {:?}", flow.accept, flow.dangling);
    Ok(())
}
