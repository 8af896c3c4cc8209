//! LLM endpoint abstraction for question generation: wire types, retry
//! handling, a file-backed replay mock, and a plain HTTP transport.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::fnv1a64_hex;

/// One completion request sent to the endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmRequest {
    pub template_id: String,
    pub rendered_prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

/// Completion response body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no canned response for key {0}")]
    FixtureMissing(String),
}

/// A completion endpoint. Implementations must be shareable across worker
/// threads.
pub trait LlmClient: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, ClientError>;
}

/// Retry behaviour for transport failures. A zero backoff base keeps retries
/// deterministic, which mock runs rely on.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base_ms: 250,
        }
    }
}

impl RetryPolicy {
    /// Retry without sleeping between attempts.
    pub fn immediate() -> Self {
        Self {
            max_attempts: 3,
            backoff_base_ms: 0,
        }
    }
}

/// Record of one completed exchange, kept for provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmExchange {
    pub request_template_id: String,
    pub rendered_prompt: String,
    pub raw_response: String,
    pub latency_ms: u64,
    pub attempt: u32,
}

/// Calls the client, retrying transport failures with exponential backoff.
pub fn complete_with_retry(
    client: &dyn LlmClient,
    req: &LlmRequest,
    policy: RetryPolicy,
) -> Result<(LlmResponse, LlmExchange), ClientError> {
    let start = Instant::now();
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        match client.complete(req) {
            Ok(resp) => {
                let exchange = LlmExchange {
                    request_template_id: req.template_id.clone(),
                    rendered_prompt: req.rendered_prompt.clone(),
                    raw_response: resp.text.clone(),
                    latency_ms: start.elapsed().as_millis() as u64,
                    attempt,
                };
                return Ok((resp, exchange));
            }
            Err(err) => {
                let retryable = matches!(err, ClientError::Transport(_));
                if !retryable || attempt >= policy.max_attempts.max(1) {
                    return Err(err);
                }
                if policy.backoff_base_ms > 0 {
                    let delay = policy.backoff_base_ms << (attempt - 1);
                    std::thread::sleep(std::time::Duration::from_millis(delay));
                }
            }
        }
    }
}

/// File-backed replay mock. Responses live in a directory as
/// `<key>.txt` where `key` hashes the rendered prompt; `_fallback.txt`,
/// when present, answers unknown prompts.
#[derive(Debug)]
pub struct FileMockLlmClient {
    dir: PathBuf,
    fallback: Option<String>,
}

impl FileMockLlmClient {
    pub fn open(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        if !dir.is_dir() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("mock fixture directory not found: {}", dir.display()),
            ));
        }
        let fallback = std::fs::read_to_string(dir.join("_fallback.txt")).ok();
        Ok(Self { dir, fallback })
    }

    /// Replay key for a rendered prompt.
    pub fn key_for(rendered_prompt: &str) -> String {
        fnv1a64_hex(rendered_prompt.as_bytes())
    }

    /// Writes a canned response for `rendered_prompt`, returning the key.
    /// Used to author fixtures from recorded traffic.
    pub fn record(
        dir: impl AsRef<Path>,
        rendered_prompt: &str,
        response_text: &str,
    ) -> std::io::Result<String> {
        std::fs::create_dir_all(dir.as_ref())?;
        let key = Self::key_for(rendered_prompt);
        std::fs::write(dir.as_ref().join(format!("{key}.txt")), response_text)?;
        Ok(key)
    }
}

impl LlmClient for FileMockLlmClient {
    fn id(&self) -> String {
        format!("mock:{}", self.dir.display())
    }

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, ClientError> {
        let key = Self::key_for(&req.rendered_prompt);
        match std::fs::read_to_string(self.dir.join(format!("{key}.txt"))) {
            Ok(text) => Ok(LlmResponse { text }),
            Err(_) => match &self.fallback {
                Some(text) => Ok(LlmResponse { text: text.clone() }),
                None => Err(ClientError::FixtureMissing(key)),
            },
        }
    }
}

/// In-memory mock driven by substring rules, for tests and dry runs.
#[derive(Debug, Default)]
pub struct ScriptedLlmClient {
    rules: Vec<(String, String)>,
    default: Option<String>,
}

impl ScriptedLlmClient {
    pub fn new() -> Self {
        Self::default()
    }

    /// Respond with `text` whenever the rendered prompt contains `needle`.
    /// Rules are checked in insertion order.
    pub fn on_contains(mut self, needle: &str, text: &str) -> Self {
        self.rules.push((needle.to_string(), text.to_string()));
        self
    }

    pub fn with_default(mut self, text: &str) -> Self {
        self.default = Some(text.to_string());
        self
    }
}

impl LlmClient for ScriptedLlmClient {
    fn id(&self) -> String {
        "scripted".to_string()
    }

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, ClientError> {
        for (needle, text) in &self.rules {
            if req.rendered_prompt.contains(needle) {
                return Ok(LlmResponse { text: text.clone() });
            }
        }
        match &self.default {
            Some(text) => Ok(LlmResponse { text: text.clone() }),
            None => Err(ClientError::FixtureMissing("<no matching rule>".into())),
        }
    }
}

/// Plain HTTP transport: POSTs the request as JSON, expects `{"text": …}`.
#[derive(Debug)]
pub struct HttpLlmClient {
    url: String,
}

impl HttpLlmClient {
    pub fn new(url: impl Into<String>) -> Self {
        Self { url: url.into() }
    }
}

impl LlmClient for HttpLlmClient {
    fn id(&self) -> String {
        format!("http:{}", self.url)
    }

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, ClientError> {
        let body = serde_json::to_string(req).map_err(|e| ClientError::Transport(e.to_string()))?;
        let mut resp = ureq::post(&self.url)
            .header("content-type", "application/json")
            .send(&body)
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let mut text = String::new();
        resp.body_mut()
            .as_reader()
            .read_to_string(&mut text)
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let parsed: LlmResponse =
            serde_json::from_str(&text).map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(parsed)
    }
}
