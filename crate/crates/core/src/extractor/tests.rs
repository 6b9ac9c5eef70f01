use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use super::*;
use crate::preprocess::entities::LABELS;

fn ctx() -> NerContext<'static> {
    NerContext { labels: LABELS, spec: None, lexicon: &[] }
}

fn scripted(replies: &[&str]) -> Arc<dyn Transport> {
    let replies: Vec<String> = replies.iter().map(|s| s.to_string()).collect();
    let n = AtomicUsize::new(0);
    Arc::new(FnTransport(move |_: &str| {
        let i = n.fetch_add(1, Ordering::SeqCst);
        Ok(replies[i.min(replies.len() - 1)].clone())
    }))
}

fn strs(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn empty_list_reply() {
    let g = ExtractorGateway::service(scripted(&["[]"]), ServiceConfig::default(), false);
    assert!(g.ner_extract("Stir well.", &ctx()).unwrap().is_empty());
    assert_eq!(g.requests_sent(), 1);
}

#[test]
fn reply_entities_get_spans() {
    let g = ExtractorGateway::service(
        scripted(&[r#"Answer: [{"100 mL": "volume"}, {"distilled water": "reagent"}, {"unicorn": "reagent"}]"#]),
        ServiceConfig::default(),
        false,
    );
    let text = "Pour 100 mL of distilled water.";
    let ents = g.ner_extract(text, &ctx()).unwrap();
    assert_eq!(ents.len(), 2);
    for e in &ents {
        assert_eq!(&text[e.span.0..e.span.1], e.surface);
    }
    let kinds: Vec<EventKind> = g.events().iter().map(|e| e.kind).collect();
    assert_eq!(kinds, [EventKind::Salvaged, EventKind::Dropped]);
}

#[test]
fn malformed_twice_then_fallback_or_error() {
    let strict = ExtractorGateway::service(scripted(&["nonsense"]), ServiceConfig::default(), false);
    assert!(matches!(strict.ner_extract("Add water.", &ctx()), Err(ExtractorError::MalformedReply(_))));
    assert_eq!(strict.requests_sent(), 2);

    let lenient = ExtractorGateway::service(scripted(&["nonsense"]), ServiceConfig::default(), true);
    let ents = lenient.ner_extract("Add 5 mL of water.", &ctx()).unwrap();
    assert_eq!(ents.len(), 2);
    assert!(lenient.events().iter().any(|e| e.kind == EventKind::Degraded));
}

#[test]
fn timeout_falls_back_to_rules() {
    let t: Arc<dyn Transport> = Arc::new(FnTransport(|_: &str| Err(TransportError::Timeout)));
    let cfg = ServiceConfig { retries: 1, ..Default::default() };
    let g = ExtractorGateway::service(t.clone(), cfg.clone(), true);
    let ents = g.ner_extract("100 mL of distilled water", &ctx()).unwrap();
    let labels: Vec<Label> = ents.iter().map(|e| e.label).collect();
    assert_eq!(labels, [Label::Volume, Label::Reagent]);
    assert_eq!(g.events()[0].kind, EventKind::Degraded);
    assert_eq!(g.requests_sent(), 2);

    let hard = ExtractorGateway::service(t, cfg, false);
    assert!(matches!(hard.ner_extract("water", &ctx()), Err(ExtractorError::ExtractionUnavailable(_))));
}

#[test]
fn output_choice() {
    let rec = InstructionRecord::new("add").param("reagent", &["glycoblue"]);
    assert_eq!(rec.to_prompt_json(), r#"{"action": "add", "reagent": ["glycoblue"], "output": ""}"#);
    let g = ExtractorGateway::service(scripted(&["\"RNA\""]), ServiceConfig::default(), false);
    assert_eq!(g.query_output(&rec, &strs(&["RNA", "mRNA"])).unwrap().as_deref(), Some("RNA"));
    // one candidate needs no request
    assert_eq!(g.query_output(&rec, &strs(&["solution"])).unwrap().as_deref(), Some("solution"));
    assert_eq!(g.requests_sent(), 1);

    let off = ExtractorGateway::service(scripted(&["\"protein\""]), ServiceConfig::default(), false);
    let got = off.query_output(&rec, &strs(&["water", "RNA"])).unwrap();
    assert_eq!(got.as_deref(), Some("water"));
    assert_eq!(off.requests_sent(), 2);
}

#[test]
fn missing_reagents_lists() {
    let rec = InstructionRecord::new("add").param("reagent", &[""]);
    let g = ExtractorGateway::service(scripted(&["\"glycoblue\""]), ServiceConfig::default(), false);
    assert_eq!(g.query_missing_reagents(&rec, &strs(&["RNA", "glycoblue"])).unwrap(), ["glycoblue"]);

    let g = ExtractorGateway::service(scripted(&["\"NaCl\", \"μMACS\", \"gold\""]), ServiceConfig::default(), false);
    assert_eq!(g.query_missing_reagents(&rec, &strs(&["μMACS", "solution", "NaCl"])).unwrap(), ["NaCl", "μMACS"]);

    let g = ExtractorGateway::service(scripted(&[""]), ServiceConfig::default(), false);
    assert!(g.query_missing_reagents(&rec, &strs(&["agar", "food"])).unwrap().is_empty());
}

#[test]
fn budget_is_enforced() {
    let g = ExtractorGateway::service(scripted(&["[]"]), ServiceConfig::default(), true).with_budget(2);
    g.ner_extract("a", &ctx()).unwrap();
    g.ner_extract("b", &ctx()).unwrap();
    assert_eq!(g.ner_extract("c", &ctx()), Err(ExtractorError::BudgetExhausted(2)));
}

#[test]
fn concurrency_never_exceeds_limit() {
    let t: Arc<dyn Transport> = Arc::new(FnTransport(|_: &str| {
        std::thread::sleep(Duration::from_millis(5));
        Ok("[]".to_string())
    }));
    let cfg = ServiceConfig { max_concurrency: 3, ..Default::default() };
    let g = Arc::new(ExtractorGateway::service(t, cfg, false));
    let handles: Vec<_> = (0..16)
        .map(|i| {
            let g = g.clone();
            std::thread::spawn(move || {
                for _ in 0..4 {
                    g.ner_extract(&format!("step {i}"), &ctx()).unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(g.requests_sent(), 64);
    assert!(g.peak_concurrency() <= 3);
    assert!(g.peak_concurrency() >= 2);
}

#[test]
fn rule_backend_sends_nothing() {
    let g = ExtractorGateway::rule();
    let ents = g.ner_extract("Dissolve 10 g of salt", &ctx()).unwrap();
    assert_eq!(ents.len(), 2);
    assert_eq!(g.requests_sent(), 0);
}
