//! Transports for the language-model backend: HTTP and record/replay cassettes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("service error: {0}")]
    Service(String),
    #[error("no cassette entry for request {0}")]
    NotRecorded(String),
}

/// Sends one prompt and returns the model's text reply.
pub trait Transport: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, TransportError>;
}

#[derive(Clone)]
pub struct ServiceConfig {
    pub endpoint: String,
    pub model: String,
    /// Bearer credential. Never printed.
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
    pub max_concurrency: usize,
    pub max_tokens: u32,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            endpoint: String::new(),
            model: "gpt-3.5-turbo-0125".into(),
            api_key: None,
            timeout: Duration::from_secs(30),
            retries: 2,
            max_concurrency: 4,
            max_tokens: 256,
        }
    }
}

impl ServiceConfig {
    /// Endpoint and key from `PROTOFLOW_LLM_ENDPOINT` / `PROTOFLOW_LLM_KEY`.
    pub fn from_env() -> Self {
        ServiceConfig {
            endpoint: std::env::var("PROTOFLOW_LLM_ENDPOINT").unwrap_or_default(),
            api_key: std::env::var("PROTOFLOW_LLM_KEY").ok().filter(|k| !k.is_empty()),
            ..Default::default()
        }
    }
}

impl fmt::Debug for ServiceConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServiceConfig")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("timeout", &self.timeout)
            .field("retries", &self.retries)
            .field("max_concurrency", &self.max_concurrency)
            .field("max_tokens", &self.max_tokens)
            .finish()
    }
}

pub struct HttpTransport {
    agent: ureq::Agent,
    config: ServiceConfig,
}

impl HttpTransport {
    pub fn new(config: ServiceConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        HttpTransport { agent, config }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
}

/// Pull the reply text out of the common provider response shapes.
fn reply_text(body: &serde_json::Value) -> Option<String> {
    let candidates = [
        body.pointer("/text"),
        body.pointer("/choices/0/text"),
        body.pointer("/choices/0/message/content"),
        body.pointer("/content/0/text"),
        body.pointer("/completion"),
    ];
    candidates.into_iter().flatten().find_map(|v| v.as_str().map(str::to_string))
}

impl Transport for HttpTransport {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.config.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let body = CompletionRequest { model: &self.config.model, prompt, max_tokens: self.config.max_tokens };
        match req.send_json(&body) {
            Ok(resp) => {
                let json: serde_json::Value = resp.into_json().map_err(|e| TransportError::Service(format!("bad response body: {e}")))?;
                reply_text(&json).ok_or_else(|| TransportError::Service("response has no text field".into()))
            }
            Err(ureq::Error::Status(code, _)) => Err(TransportError::Service(format!("HTTP {code}"))),
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.to_lowercase().contains("timed out") {
                    Err(TransportError::Timeout)
                } else {
                    // the transport message carries only the URL, never headers
                    Err(TransportError::Service(t.kind().to_string()))
                }
            }
        }
    }
}

/// One recorded exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub request_hash: String,
    pub prompt: String,
    pub reply: String,
}

pub fn request_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Replays recorded replies, or records them while forwarding to an inner transport.
pub struct Cassette {
    entries: Mutex<BTreeMap<String, CassetteEntry>>,
    inner: Option<Arc<dyn Transport>>,
    path: Option<PathBuf>,
}

impl Cassette {
    pub fn replay(entries: Vec<CassetteEntry>) -> Self {
        let map = entries.into_iter().map(|e| (e.request_hash.clone(), e)).collect();
        Cassette { entries: Mutex::new(map), inner: None, path: None }
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let entries: Vec<CassetteEntry> = serde_json::from_str(&text).map_err(std::io::Error::other)?;
        let mut c = Cassette::replay(entries);
        c.path = Some(path.as_ref().to_path_buf());
        Ok(c)
    }

    /// Forward misses to `inner` and remember the replies; [`Cassette::save`] writes them to `path`.
    pub fn record(inner: Arc<dyn Transport>, path: impl Into<PathBuf>) -> Self {
        Cassette { entries: Mutex::new(BTreeMap::new()), inner: Some(inner), path: Some(path.into()) }
    }

    pub fn entries(&self) -> Vec<CassetteEntry> {
        self.entries.lock().unwrap().values().cloned().collect()
    }

    pub fn save(&self) -> std::io::Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        let json = serde_json::to_string_pretty(&self.entries()).map_err(std::io::Error::other)?;
        std::fs::write(path, json + "\n")
    }
}

impl Transport for Cassette {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let hash = request_hash(prompt);
        if let Some(e) = self.entries.lock().unwrap().get(&hash) {
            return Ok(e.reply.clone());
        }
        let Some(inner) = &self.inner else { return Err(TransportError::NotRecorded(hash)) };
        let reply = inner.complete(prompt)?;
        self.entries
            .lock()
            .unwrap()
            .insert(hash.clone(), CassetteEntry { request_hash: hash, prompt: prompt.to_string(), reply: reply.clone() });
        Ok(reply)
    }
}

/// A transport answering from a closure; handy for tests and examples.
pub struct FnTransport<F>(pub F);

impl<F> Transport for FnTransport<F>
where
    F: Fn(&str) -> Result<String, TransportError> + Send + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        (self.0)(prompt)
    }
}
