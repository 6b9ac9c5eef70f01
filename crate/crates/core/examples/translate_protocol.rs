//! Natural-language protocol to a completed, checked DSL program.
//!
//! cargo run --example translate_protocol

use protoflow::dsl::load_dsl_spec;
use protoflow::extractor::ExtractorGateway;
use protoflow::pipeline::{translate, RunConfig};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = load_dsl_spec(format!("{FIXTURES}/specs/cooking.toml"))?;
    let text = std::fs::read_to_string(format!("{FIXTURES}/protocols/pasta_bolognese.txt"))?;
    let t = translate(&text, &spec, &ExtractorGateway::rule(), &RunConfig::default())?;

    println!("-- structured\n{}", t.structured.to_listing());
    println!("-- completed\n{}", t.completed.to_listing());
    for flag in &t.completed.flags {
        println!("review: {}", flag.reason);
    }
    print!("{}", t.report.to_text());
    Ok(())
}
