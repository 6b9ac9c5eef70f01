//! Extraction gateway: a deterministic rule backend and a language-model
//! service client behind one interface.

pub mod prompts;
pub mod rule;
pub mod service;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dsl::DslSpec;
use crate::preprocess::entities::{Entity, Label};
use crate::preprocess::lexicon::find_phrase;

pub use service::{Cassette, CassetteEntry, FnTransport, HttpTransport, ServiceConfig, Transport, TransportError};

pub const DEFAULT_BUDGET: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractorError {
    #[error("extraction service unavailable: {0}")]
    ExtractionUnavailable(String),
    #[error("malformed reply from extraction service: {0:?}")]
    MalformedReply(String),
    #[error("request budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Rule,
    Service,
    /// Service first; the rule backend answers when the service fails.
    ServiceWithRuleFallback,
}

/// Inputs the recognizers need besides the text itself.
#[derive(Debug, Clone, Copy)]
pub struct NerContext<'a> {
    pub labels: &'a [Label],
    pub spec: Option<&'a DslSpec>,
    /// Extra reagent names, e.g. from an ingredient list.
    pub lexicon: &'a [String],
}

/// An instruction as shown to the service: action, parameter lists, output.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub action: String,
    pub params: Vec<(String, Vec<String>)>,
    pub output: String,
}

impl InstructionRecord {
    pub fn new(action: impl Into<String>) -> Self {
        InstructionRecord { action: action.into(), ..Default::default() }
    }

    pub fn param(mut self, key: impl Into<String>, values: &[&str]) -> Self {
        self.params.push((key.into(), values.iter().map(|s| s.to_string()).collect()));
        self
    }

    /// Single-line JSON with `action` first and `output` last.
    pub fn to_prompt_json(&self) -> String {
        let q = |s: &str| serde_json::to_string(s).unwrap();
        let mut out = format!("{{\"action\": {}", q(&self.action));
        for (k, vs) in &self.params {
            let items: Vec<String> = vs.iter().map(|v| q(v)).collect();
            out.push_str(&format!(", {}: [{}]", q(k), items.join(", ")));
        }
        out.push_str(&format!(", \"output\": {}}}", q(&self.output)));
        out
    }

    /// Non-empty parameter values.
    pub fn named(&self) -> Vec<String> {
        self.params.iter().flat_map(|(_, vs)| vs.iter()).filter(|v| !v.is_empty()).cloned().collect()
    }

    /// Number of empty parameter values awaiting completion.
    pub fn missing(&self) -> usize {
        self.params.iter().flat_map(|(_, vs)| vs.iter()).filter(|v| v.is_empty()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// The rule backend answered in place of the service.
    Degraded,
    Reask,
    Salvaged,
    /// A reply entity could not be located in the text.
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayEvent {
    pub kind: EventKind,
    pub operation: String,
    pub detail: String,
}

struct Limiter {
    max: usize,
    active: Mutex<usize>,
    cv: Condvar,
    peak: AtomicUsize,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Limiter { max: max.max(1), active: Mutex::new(0), cv: Condvar::new(), peak: AtomicUsize::new(0) }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.active.lock().unwrap();
        while *n >= self.max {
            n = self.cv.wait(n).unwrap();
        }
        *n += 1;
        self.peak.fetch_max(*n, Ordering::SeqCst);
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().unwrap() -= 1;
        self.0.cv.notify_one();
    }
}

/// Routes extraction requests to the configured backend. Shareable across threads.
pub struct ExtractorGateway {
    backend: Backend,
    config: ServiceConfig,
    transport: Option<Arc<dyn Transport>>,
    limiter: Limiter,
    budget: usize,
    used: AtomicUsize,
    cases: String,
    events: Mutex<Vec<GatewayEvent>>,
}

impl std::fmt::Debug for ExtractorGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExtractorGateway")
            .field("backend", &self.backend)
            .field("config", &self.config)
            .field("budget", &self.budget)
            .field("used", &self.used.load(Ordering::SeqCst))
            .finish()
    }
}

impl Default for ExtractorGateway {
    fn default() -> Self {
        ExtractorGateway::rule()
    }
}

impl ExtractorGateway {
    pub fn rule() -> Self {
        ExtractorGateway::build(Backend::Rule, ServiceConfig::default(), None)
    }

    pub fn service(transport: Arc<dyn Transport>, config: ServiceConfig, fallback: bool) -> Self {
        let backend = if fallback { Backend::ServiceWithRuleFallback } else { Backend::Service };
        ExtractorGateway::build(backend, config, Some(transport))
    }

    /// HTTP client for `config.endpoint`.
    pub fn http(config: ServiceConfig, fallback: bool) -> Self {
        let transport: Arc<dyn Transport> = Arc::new(HttpTransport::new(config.clone()));
        ExtractorGateway::service(transport, config, fallback)
    }

    fn build(backend: Backend, config: ServiceConfig, transport: Option<Arc<dyn Transport>>) -> Self {
        ExtractorGateway {
            backend,
            limiter: Limiter::new(config.max_concurrency),
            config,
            transport,
            budget: DEFAULT_BUDGET,
            used: AtomicUsize::new(0),
            cases: prompts::NER_CASES.to_string(),
            events: Mutex::new(Vec::new()),
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_cases(mut self, cases: impl Into<String>) -> Self {
        self.cases = cases.into();
        self
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn requests_sent(&self) -> usize {
        self.used.load(Ordering::SeqCst)
    }

    /// Highest number of service requests in flight at once.
    pub fn peak_concurrency(&self) -> usize {
        self.limiter.peak.load(Ordering::SeqCst)
    }

    pub fn events(&self) -> Vec<GatewayEvent> {
        self.events.lock().unwrap().clone()
    }

    pub fn take_events(&self) -> Vec<GatewayEvent> {
        std::mem::take(&mut *self.events.lock().unwrap())
    }

    fn note(&self, kind: EventKind, operation: &str, detail: impl Into<String>) {
        self.events.lock().unwrap().push(GatewayEvent { kind, operation: operation.to_string(), detail: detail.into() });
    }

    fn uses_service(&self) -> bool {
        self.backend != Backend::Rule && self.transport.is_some()
    }

    /// One request with retries on transport failure.
    fn send(&self, prompt: &str) -> Result<String, ExtractorError> {
        let transport = self.transport.as_ref().ok_or_else(|| ExtractorError::ExtractionUnavailable("no transport".into()))?;
        let mut last = None;
        for _ in 0..=self.config.retries {
            if self.used.fetch_add(1, Ordering::SeqCst) >= self.budget {
                self.used.fetch_sub(1, Ordering::SeqCst);
                return Err(ExtractorError::BudgetExhausted(self.budget));
            }
            let result = {
                let _permit = self.limiter.acquire();
                transport.complete(prompt)
            };
            match result {
                Ok(reply) => return Ok(reply),
                Err(e @ TransportError::NotRecorded(_)) => return Err(ExtractorError::ExtractionUnavailable(e.to_string())),
                Err(e) => last = Some(e),
            }
        }
        Err(ExtractorError::ExtractionUnavailable(last.map(|e| e.to_string()).unwrap_or_default()))
    }

    /// Send, parse, re-ask once on a parse failure.
    fn ask<T>(&self, op: &str, prompt: &str, parse: impl Fn(&str) -> Parsed<T>) -> Result<T, ExtractorError> {
        let mut reply = self.send(prompt)?;
        for attempt in 0..2 {
            match parse(&reply) {
                Parsed::Strict(v) => return Ok(v),
                Parsed::Salvaged(v) => {
                    self.note(EventKind::Salvaged, op, "reply needed salvage");
                    return Ok(v);
                }
                Parsed::Failed if attempt == 0 => {
                    self.note(EventKind::Reask, op, "unparseable reply");
                    reply = self.send(prompt)?;
                }
                Parsed::Failed => {}
            }
        }
        Err(ExtractorError::MalformedReply(reply))
    }

    /// Apply the backend mode to a service result.
    fn settle<T>(&self, op: &str, result: Result<T, ExtractorError>, rule: impl FnOnce() -> T) -> Result<T, ExtractorError> {
        match result {
            Ok(v) => Ok(v),
            Err(e @ ExtractorError::BudgetExhausted(_)) => Err(e),
            Err(e) if self.backend == Backend::ServiceWithRuleFallback => {
                self.note(EventKind::Degraded, op, e.to_string());
                Ok(rule())
            }
            Err(e) => Err(e),
        }
    }

    /// Named entities of `text` with labels from `ctx.labels`. Spans are relative to `text`.
    pub fn ner_extract(&self, text: &str, ctx: &NerContext<'_>) -> Result<Vec<Entity>, ExtractorError> {
        if ctx.labels.is_empty() {
            return Err(ExtractorError::InvalidRequest("empty label set".into()));
        }
        if !self.uses_service() {
            return Ok(rule::rule_entities(text, ctx));
        }
        let label_set = ctx.labels.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(", ");
        let prompt = prompts::render_ner(&label_set, &self.cases, text);
        let result = self.ask("ner", &prompt, parse_ner_reply).map(|pairs| self.locate(text, pairs, ctx.labels));
        self.settle("ner", result, || rule::rule_entities(text, ctx))
    }

    fn locate(&self, text: &str, pairs: Vec<(String, String)>, labels: &[Label]) -> Vec<Entity> {
        let mut out: Vec<Entity> = Vec::new();
        for (surface, label) in pairs {
            let surface = surface.trim().trim_matches(|c| c == '[' || c == ']').trim();
            let label = match label.parse::<Label>() {
                Ok(l) if labels.contains(&l) => l,
                _ if labels.contains(&Label::Other) => Label::Other,
                _ => continue,
            };
            let free = find_phrase(text, surface).into_iter().find(|&(s, e)| !out.iter().any(|x| s < x.span.1 && x.span.0 < e));
            match free {
                Some((s, e)) => out.push(Entity::new(&text[s..e], (s, e), label, 0.8)),
                None => self.note(EventKind::Dropped, "ner", format!("{surface:?} not found in text")),
            }
        }
        out.sort_by_key(|e| e.span);
        out
    }

    /// The candidate best describing the instruction's output; `None` for an empty list.
    pub fn query_output(&self, record: &InstructionRecord, candidates: &[String]) -> Result<Option<String>, ExtractorError> {
        match candidates {
            [] => return Ok(None),
            [only] => return Ok(Some(only.clone())),
            _ => {}
        }
        let json = record.to_prompt_json();
        let rule = || rule::rule_output(&json, candidates);
        if !self.uses_service() {
            return Ok(rule());
        }
        let prompt = prompts::render_output(&json, &prompts::quote_list(candidates));
        match self.ask("output", &prompt, |r| parse_choice(r, candidates)) {
            Ok(v) => Ok(Some(v)),
            Err(ExtractorError::MalformedReply(_)) => {
                self.note(EventKind::Degraded, "output", "reply outside the candidate list");
                Ok(rule())
            }
            Err(e) => self.settle("output", Err(e), rule),
        }
    }

    /// Candidates that fill the record's empty parameter values; possibly empty.
    pub fn query_missing_reagents(&self, record: &InstructionRecord, candidates: &[String]) -> Result<Vec<String>, ExtractorError> {
        let rule = || rule::rule_missing(&record.named(), candidates, record.missing());
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        if !self.uses_service() {
            return Ok(rule());
        }
        let prompt = prompts::render_missing_reagents(&record.to_prompt_json(), &prompts::quote_list(candidates));
        let result = self.ask("missing_reagents", &prompt, |r| parse_reagent_list(r, candidates));
        self.settle("missing_reagents", result, rule)
    }
}

enum Parsed<T> {
    Strict(T),
    Salvaged(T),
    Failed,
}

fn ner_pairs(v: &serde_json::Value) -> Option<Vec<(String, String)>> {
    let mut out = Vec::new();
    for item in v.as_array()? {
        for (k, l) in item.as_object()? {
            out.push((k.clone(), l.as_str()?.to_string()));
        }
    }
    Some(out)
}

fn parse_ner_reply(reply: &str) -> Parsed<Vec<(String, String)>> {
    let t = reply.trim();
    if let Some(p) = serde_json::from_str(t).ok().as_ref().and_then(ner_pairs) {
        return Parsed::Strict(p);
    }
    if let (Some(s), Some(e)) = (t.find('['), t.rfind(']')) {
        if s < e {
            if let Some(p) = serde_json::from_str(&t[s..=e]).ok().as_ref().and_then(ner_pairs) {
                return Parsed::Salvaged(p);
            }
        }
    }
    Parsed::Failed
}

fn quoted(reply: &str) -> Vec<String> {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r#""([^"]*)""#).unwrap());
    re.captures_iter(reply).map(|c| c[1].to_string()).collect()
}

fn parse_choice(reply: &str, candidates: &[String]) -> Parsed<String> {
    let first = reply.trim().lines().next().unwrap_or("").trim();
    let bare = first.strip_prefix("Output:").unwrap_or(first).trim().trim_matches('"');
    if let Some(c) = candidates.iter().find(|c| c.as_str() == bare) {
        return Parsed::Strict(c.clone());
    }
    let lenient = quoted(reply)
        .into_iter()
        .chain(std::iter::once(bare.to_string()))
        .find_map(|q| candidates.iter().find(|c| c.eq_ignore_ascii_case(q.trim())));
    match lenient {
        Some(c) => Parsed::Salvaged(c.clone()),
        None => Parsed::Failed,
    }
}

fn parse_reagent_list(reply: &str, candidates: &[String]) -> Parsed<Vec<String>> {
    let line = reply.trim().lines().next().unwrap_or("").trim();
    let line = line.strip_prefix("Reagents:").unwrap_or(line).trim();
    let mut items = quoted(line);
    if items.is_empty() {
        items = line.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    let mut seen = BTreeSet::new();
    let picked = items
        .iter()
        .filter_map(|i| candidates.iter().find(|c| c.as_str() == i.as_str()))
        .filter(|c| seen.insert(c.as_str()))
        .cloned()
        .collect();
    Parsed::Strict(picked)
}

#[cfg(test)]
mod tests;
