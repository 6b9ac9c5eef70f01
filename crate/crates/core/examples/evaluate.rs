//! Key-value similarity of a translation against a hand-written reference.
//!
//! cargo run --example evaluate

use protoflow::dsl::load_dsl_spec;
use protoflow::eval::{kv_similarity, pair_scores, to_canonical, KeyWeights, Metric};
use protoflow::extractor::ExtractorGateway;
use protoflow::pipeline::{translate, RunConfig};
use protoflow::program::DslProgram;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = load_dsl_spec(format!("{FIXTURES}/specs/cooking.toml"))?;
    let text = std::fs::read_to_string(format!("{FIXTURES}/protocols/pasta_bolognese.txt"))?;
    let t = translate(&text, &spec, &ExtractorGateway::rule(), &RunConfig::default())?;
    let gold = DslProgram::from_listing(&std::fs::read_to_string(format!("{FIXTURES}/gold/pasta_bolognese.listing"))?)?;

    let (pred, gold) = (to_canonical(&t.completed), to_canonical(&gold));
    for metric in [Metric::Exact, Metric::RougeL, Metric::Bleu] {
        println!("{metric:?}: {:.4}", kv_similarity(&pred, &gold, metric));
    }
    for (k, s) in pair_scores(&pred, &gold, Metric::Exact, &KeyWeights::default()).iter().enumerate() {
        println!("step {:>2}: {s:.3}", k + 1);
    }
    Ok(())
}
