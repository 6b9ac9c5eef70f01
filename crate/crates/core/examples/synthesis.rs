//! Pre-process protocol text into action units and synthesize the program
//! that best explains them.
//!
//! cargo run --example synthesis

use protoflow::dsl::load_dsl_spec;
use protoflow::extractor::ExtractorGateway;
use protoflow::preprocess::{preprocess, MatchConfig};
use protoflow::synthesis::{detect_control_flow, synthesize, SynthesisConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = load_dsl_spec(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/specs/chemistry.toml"))?;
    let text = "Dissolve 2 g sodium chloride in 10 mL water in the flask.\n\
                Heat the solution to 70 C for 10 minutes.\n\
                Repeat the heating 3 times.";
    let pre = preprocess(text, &spec, &ExtractorGateway::rule(), &MatchConfig::default())?;
    for u in &pre.sequence.units {
        let ents: Vec<String> = u.entities.iter().map(|e| format!("{}:{}", e.surface, e.label.as_str())).collect();
        println!("step {} {:?} -> {:?} [{}]", u.step, u.text, u.operation(), ents.join(", "));
    }

    let cfg = SynthesisConfig { seed: 1, ..SynthesisConfig::default() };
    let syn = synthesize(&pre.sequence, &spec, &cfg)?;
    println!("divergence {:.4} after {} restarts", syn.score, syn.traces.len());
    let program = detect_control_flow(&syn.sequence, syn.program, &spec);
    print!("{}", program.to_listing());
    Ok(())
}
