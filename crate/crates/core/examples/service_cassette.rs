//! Drive the extraction service through a recording cassette, then replay
//! the run offline.
//!
//! With PROTOFLOW_LLM_ENDPOINT set the recording talks to that endpoint;
//! otherwise a scripted stand-in answers.
//!
//! cargo run --example service_cassette

use std::sync::Arc;

use protoflow::dsl::load_dsl_spec;
use protoflow::extractor::{Cassette, ExtractorGateway, FnTransport, HttpTransport, ServiceConfig, Transport};
use protoflow::pipeline::{artifacts, translate, Formats, RunConfig};

fn scripted(prompt: &str) -> String {
    if prompt.starts_with("Given entity label set") {
        let query = prompt.rsplit("Text: ").next().unwrap_or_default();
        let mut found = Vec::new();
        for (surface, label) in [("35 mL", "volume"), ("25 mL", "volume"), ("water", "reagent"), ("flask", "container")] {
            if query.contains(surface) {
                found.push(format!("{{\"{surface}\": \"{label}\"}}"));
            }
        }
        format!("[{}]", found.join(", "))
    } else {
        prompt.rsplit("list: ").next().unwrap_or_default().split(',').next().unwrap_or_default().trim().to_string()
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = load_dsl_spec(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/specs/chemistry.toml"))?;
    let text = "Add 35 mL water to the flask.\nAdd 25 mL water to the flask.\n";
    let config = ServiceConfig::from_env();
    let upstream: Arc<dyn Transport> = if config.endpoint.is_empty() {
        Arc::new(FnTransport(|p: &str| Ok(scripted(p))))
    } else {
        Arc::new(HttpTransport::new(config.clone()))
    };

    let dir = std::env::temp_dir().join("protoflow-cassette-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("water_flask.json");
    let recorder = Arc::new(Cassette::record(upstream, &path));
    let gw = ExtractorGateway::service(recorder.clone(), config.clone(), true);
    let first = artifacts(&translate(text, &spec, &gw, &RunConfig::default())?, Formats::default());
    recorder.save()?;
    println!("recorded {} exchanges to {}", recorder.entries().len(), path.display());

    let replay = ExtractorGateway::service(Arc::new(Cassette::load(&path)?), config, false);
    let second = artifacts(&translate(text, &spec, &replay, &RunConfig::default())?, Formats::default());
    println!("replay identical: {}", first == second);
    Ok(())
}
