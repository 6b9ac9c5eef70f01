//! Simulate volumes against a declared container capacity.
//!
//! cargo run --example capacity_check

use protoflow::dsl::load_dsl_spec;
use protoflow::execution::{track_capacity, Declarations};
use protoflow::extractor::ExtractorGateway;
use protoflow::pipeline::{translate, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = load_dsl_spec(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/specs/chemistry.toml"))?;
    let declarations = Declarations::from_toml_str("[containers]\nflask = \"50 mL\"\n")?;
    let cfg = RunConfig { declarations, ..RunConfig::default() };
    let text = "Add 35 mL water to the flask.\nAdd 25 mL water to the flask.\n";
    let t = translate(text, &spec, &ExtractorGateway::rule(), &cfg)?;

    for (container, ml) in track_capacity(&t.report.trace) {
        println!("{container}: {ml} mL");
    }
    for v in &t.report.violations {
        println!("{v}");
    }
    Ok(())
}
