//! Segmentation, action extraction and pseudo-labeled entities.

pub mod actions;
pub mod entities;
pub mod lexicon;
pub mod segment;
pub mod similarity;

use serde::{Deserialize, Serialize};

pub use actions::{
    analyze_step, extract_actions, match_operation, match_operation_with, ActionError, ActionMatch, ActionUnit, Clause, HookUse,
    MatchConfig, OpCandidate, Repeat, UnitKind, Verb,
};
pub use entities::{Entity, Label, Svo, LABELS};
pub use segment::{segment_protocol, Ingredient, Metadata, ProtocolText, Step};

use crate::dsl::DslSpec;
use crate::extractor::{ExtractorError, ExtractorGateway, NerContext};

/// s(c): action units of all steps in document order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EntitySequence {
    pub units: Vec<ActionUnit>,
    /// Steps or clauses that need manual review.
    pub issues: Vec<PreprocessIssue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessIssue {
    pub step: usize,
    pub span: (usize, usize),
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessed {
    pub protocol: ProtocolText,
    pub sequence: EntitySequence,
}

/// Entities of one step text, spans relative to `step`.
pub fn extract_entities(step: &str, gateway: &ExtractorGateway, ctx: &NerContext<'_>) -> Result<Vec<Entity>, ExtractorError> {
    gateway.ner_extract(step, ctx)
}

/// Segment `raw`, extract actions and entities for every step.
pub fn preprocess(raw: &str, spec: &DslSpec, gateway: &ExtractorGateway, cfg: &MatchConfig) -> Result<Preprocessed, ExtractorError> {
    let protocol = segment_protocol(ProtocolText::new(raw));
    let lexicon: Vec<String> = protocol.metadata.ingredients.iter().map(|i| i.name.clone()).collect();
    let ctx = NerContext { labels: LABELS, spec: Some(spec), lexicon: &lexicon };
    let mut seq = EntitySequence::default();
    for (i, step) in protocol.steps.iter().enumerate() {
        let ents = extract_entities(&step.text, gateway, &ctx)?;
        let units = analyze_step(&step.text, step.span.0, i, &ents, spec, cfg);
        for u in units.iter().filter(|u| u.kind == UnitKind::Placeholder) {
            let verb = u.verb.as_ref().map_or("", |v| v.text.as_str());
            seq.issues.push(PreprocessIssue { step: i, span: u.span, reason: format!("no operation matches verb {verb:?}") });
        }
        if units.is_empty() {
            seq.issues.push(PreprocessIssue { step: i, span: step.span, reason: "no action found".into() });
            seq.units.push(ActionUnit::placeholder(i, step.span, &step.text));
        }
        for u in units {
            if let Some(op) = repeated_without_instance(&u, &seq.units) {
                // "repeat the titration" with no titration before it performs one first
                let mut first = u.clone();
                first.kind = UnitKind::Operation;
                first.candidates = vec![OpCandidate { operation: op, score: 1.0 }];
                first.trailing.clear();
                first.repeat = None;
                seq.units.push(first);
            }
            seq.units.push(u);
        }
    }
    Ok(Preprocessed { protocol, sequence: seq })
}

fn repeated_without_instance(unit: &ActionUnit, before: &[ActionUnit]) -> Option<String> {
    if unit.kind != UnitKind::Loop {
        return None;
    }
    let r = unit.repeat.as_ref()?;
    let op = r.operation.clone()?;
    let seen = before.iter().any(|b| b.kind == UnitKind::Operation && b.operation() == Some(op.as_str()));
    (!seen && r.steps.is_none()).then_some(op)
}
