//! Load a DSL, list each operation's legal slot layouts and validate a listing.
//!
//! cargo run --example dsl_patterns

use protoflow::dsl::{enumerate_patterns, load_dsl_spec, validate_program};
use protoflow::program::DslProgram;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = load_dsl_spec(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/specs/chemistry.toml"))?;
    for op in spec.operations() {
        let patterns = enumerate_patterns(op, &spec);
        println!("{} ({} patterns)", op.name, patterns.len());
        for p in patterns.iter().take(3) {
            println!("    {}", p.slot_names().collect::<Vec<_>>().join(" "));
        }
    }

    let program = DslProgram::from_listing(
        r#"add(slot = "water", volume = 35 mL, target = "flask", emit = mixture_1);
heat(temperature = 70C);"#,
    )?;
    let report = validate_program(&program, &spec);
    println!("verified: {}", report.is_verified());
    for v in report.violations() {
        println!("  {v}");
    }
    Ok(())
}
