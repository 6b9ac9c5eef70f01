//! Key-value comparison of programs: canonical records scored key by key.

mod metrics;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use metrics::{bleu, rouge_l, tokenize};

use crate::program::{DslProgram, Value};
use crate::units::format_number;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("eval stage: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("eval stage: {path}: not a list of records: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("eval stage: unknown metric `{0}` (rouge-l, bleu, exact)")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CanonicalValue {
    One(String),
    Many(Vec<String>),
}

impl CanonicalValue {
    fn text(&self) -> String {
        match self {
            CanonicalValue::One(s) => s.clone(),
            CanonicalValue::Many(v) => v.join(", "),
        }
    }
}

/// One instruction as a flat key-value map; `action` is always present.
pub type CanonicalRecord = BTreeMap<String, CanonicalValue>;

fn canonical_value(v: &Value) -> Option<CanonicalValue> {
    match v {
        Value::Missing => None,
        Value::List(items) => Some(CanonicalValue::Many(items.iter().filter(|i| !matches!(i, Value::Missing)).map(Value::plain).collect())),
        other => Some(CanonicalValue::One(other.plain())),
    }
}

pub fn to_canonical(program: &DslProgram) -> Vec<CanonicalRecord> {
    program
        .instructions
        .iter()
        .map(|instr| {
            let mut rec = CanonicalRecord::new();
            rec.insert("action".into(), CanonicalValue::One(instr.op.to_lowercase()));
            for b in &instr.bindings {
                let key = if b.slot == "emit" { "output".to_string() } else { b.slot.to_lowercase() };
                if let Some(v) = canonical_value(&b.value) {
                    rec.insert(key, v);
                }
            }
            rec
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    RougeL,
    Bleu,
    Exact,
}

impl FromStr for Metric {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rouge-l" | "rouge_l" | "rougel" => Ok(Metric::RougeL),
            "bleu" => Ok(Metric::Bleu),
            "exact" => Ok(Metric::Exact),
            other => Err(EvalError::UnknownMetric(other.to_string())),
        }
    }
}

impl Metric {
    pub fn score(self, pred: &[String], gold: &[String]) -> f64 {
        match self {
            Metric::RougeL => rouge_l(pred, gold),
            Metric::Bleu => bleu(pred, gold, 4),
            Metric::Exact => f64::from(u8::from(pred == gold)),
        }
    }
}

/// Per-key weights; keys not listed weigh 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyWeights(pub BTreeMap<String, f64>);

impl Default for KeyWeights {
    fn default() -> Self {
        KeyWeights(BTreeMap::from([("action".into(), 3.0), ("temperature".into(), 2.0), ("reagent".into(), 2.0)]))
    }
}

impl KeyWeights {
    pub fn of(&self, key: &str) -> f64 {
        self.0.get(key).copied().unwrap_or(1.0)
    }
}

/// Weighted mean over the union of keys; a key on one side only scores 0.
pub fn record_similarity(pred: &CanonicalRecord, gold: &CanonicalRecord, metric: Metric, weights: &KeyWeights) -> f64 {
    let keys: BTreeSet<&String> = pred.keys().chain(gold.keys()).collect();
    if keys.is_empty() {
        return 1.0;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for k in keys {
        let w = weights.of(k);
        den += w;
        if let (Some(p), Some(g)) = (pred.get(k), gold.get(k)) {
            num += w * metric.score(&tokenize(&p.text()), &tokenize(&g.text()));
        }
    }
    num / den
}

/// Scores of order-aligned pairs; the longer side's extra records score 0.
pub fn pair_scores(pred: &[CanonicalRecord], gold: &[CanonicalRecord], metric: Metric, weights: &KeyWeights) -> Vec<f64> {
    (0..pred.len().max(gold.len()))
        .map(|i| match (pred.get(i), gold.get(i)) {
            (Some(p), Some(g)) => record_similarity(p, g, metric, weights),
            _ => 0.0,
        })
        .collect()
}

pub fn kv_similarity(pred: &[CanonicalRecord], gold: &[CanonicalRecord], metric: Metric) -> f64 {
    kv_similarity_weighted(pred, gold, metric, &KeyWeights::default())
}

pub fn kv_similarity_weighted(pred: &[CanonicalRecord], gold: &[CanonicalRecord], metric: Metric, weights: &KeyWeights) -> f64 {
    let scores = pair_scores(pred, gold, metric, weights);
    if scores.is_empty() {
        return 1.0;
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolScore {
    pub name: String,
    pub score: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub metric: Metric,
    pub rows: Vec<ProtocolScore>,
    /// Mean of per-protocol scores.
    pub per_protocol: f64,
    /// Mean over every aligned step of every protocol.
    pub per_step: f64,
}

impl EvalTable {
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(8).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>5}", "protocol", "score", "steps");
        for r in &self.rows {
            let _ = writeln!(out, "{:<width$}  {:>6.4}  {:>5}", r.name, r.score, r.steps);
        }
        let _ = writeln!(out, "{:<width$}  {:>6.4}", "mean (per protocol)", self.per_protocol);
        let _ = writeln!(out, "{:<width$}  {:>6.4}", "mean (per step)", self.per_step);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("protocol,score,steps\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.name, format_number(r.score), r.steps);
        }
        let _ = writeln!(out, "mean_per_protocol,{},", format_number(self.per_protocol));
        let _ = writeln!(out, "mean_per_step,{},", format_number(self.per_step));
        out
    }
}

pub fn load_records(path: &Path) -> Result<Vec<CanonicalRecord>, EvalError> {
    let src = std::fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.into(), source })?;
    serde_json::from_str(&src).map_err(|source| EvalError::Parse { path: path.into(), source })
}

fn json_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>, EvalError> {
    let entries = std::fs::read_dir(dir).map_err(|source| EvalError::Io { path: dir.into(), source })?;
    let mut out = BTreeMap::new();
    for e in entries {
        let path = e.map_err(|source| EvalError::Io { path: dir.into(), source })?.path();
        if path.extension().is_some_and(|x| x == "json") {
            if let Some(stem) = path.file_stem() {
                out.insert(stem.to_string_lossy().into_owned(), path);
            }
        }
    }
    Ok(out)
}

/// Score every reference file against the prediction of the same name; a
/// missing prediction scores 0.
pub fn evaluate_dirs(pred_dir: &Path, gold_dir: &Path, metric: Metric) -> Result<EvalTable, EvalError> {
    let preds = json_files(pred_dir)?;
    let golds = json_files(gold_dir)?;
    let weights = KeyWeights::default();
    let (mut rows, mut all_steps) = (Vec::new(), Vec::new());
    for (name, gold_path) in &golds {
        let gold = load_records(gold_path)?;
        let pred = match preds.get(name) {
            Some(p) => load_records(p)?,
            None => Vec::new(),
        };
        let scores = pair_scores(&pred, &gold, metric, &weights);
        let score = if scores.is_empty() { 1.0 } else { scores.iter().sum::<f64>() / scores.len() as f64 };
        all_steps.extend(scores.iter().copied());
        rows.push(ProtocolScore { name: name.clone(), score, steps: scores.len() });
    }
    let mean = |v: &[f64]| if v.is_empty() { 1.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let per_protocol = mean(&rows.iter().map(|r| r.score).collect::<Vec<_>>());
    Ok(EvalTable { metric, rows, per_protocol, per_step: mean(&all_steps) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pairs: &[(&str, &str)]) -> CanonicalRecord {
        pairs.iter().map(|(k, v)| (k.to_string(), CanonicalValue::One(v.to_string()))).collect()
    }

    #[test]
    fn canonical_shape() {
        let p = DslProgram::from_listing(
            r#"pour(reagent = "water", temperature = "hot"); add(slot = "oil", target = "large saucepan", emit = mixture_1);"#,
        )
        .unwrap();
        let recs = to_canonical(&p);
        assert_eq!(serde_json::to_string(&recs[0]).unwrap(), r#"{"action":"pour","reagent":"water","temperature":"hot"}"#);
        assert_eq!(recs[1], rec(&[("action", "add"), ("slot", "oil"), ("target", "large saucepan"), ("output", "mixture_1")]));
        assert!(to_canonical(&DslProgram::default()).is_empty());
    }

    #[test]
    fn similarity_properties() {
        let gold = vec![
            rec(&[("action", "pour"), ("reagent", "water"), ("temperature", "hot")]),
            rec(&[("action", "add"), ("slot", "salt")]),
            rec(&[("action", "stir")]),
            rec(&[("action", "boil"), ("target", "pot")]),
        ];
        for m in [Metric::Exact, Metric::RougeL, Metric::Bleu] {
            assert_eq!(kv_similarity(&gold, &gold, m), 1.0);
        }
        let mut cold = gold.clone();
        cold[0].insert("temperature".into(), CanonicalValue::One("cold".into()));
        assert!(kv_similarity(&cold, &gold, Metric::Exact) < 1.0);
        assert!(kv_similarity(&gold[..3], &gold, Metric::Exact) <= 0.75);
        assert_eq!(kv_similarity(&[], &[], Metric::Exact), 1.0);
    }

    #[test]
    fn metric_names() {
        assert_eq!("rouge-l".parse::<Metric>().unwrap(), Metric::RougeL);
        assert!("meteor".parse::<Metric>().is_err());
    }
}
