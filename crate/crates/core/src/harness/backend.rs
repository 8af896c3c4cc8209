//! Inference-backend abstraction: the wire types a multimodal answer server
//! must speak, a fixture-backed mock, and a plain HTTP transport.
//!
//! The harness never decodes video; `media_ref` is forwarded opaquely and
//! frame sampling is the backend's concern.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One answer request. `top_k` bounds how many alternatives per token the
/// backend may report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendRequest {
    pub media_ref: String,
    pub question_text: String,
    pub system_template_id: String,
    pub want_logprobs: bool,
    pub top_k: usize,
}

/// Log-probability of one generated token plus its top-k alternatives at
/// the same position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
    #[serde(default)]
    pub top_k_alternatives: Vec<(String, f64)>,
}

/// Raw answer text with optional per-token log-probabilities. An empty
/// `per_token` means the backend could not report logprobs; the run then
/// degrades to hard-answer scoring for the affected rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendResponse {
    pub raw_text: String,
    #[serde(default)]
    pub per_token: Vec<TokenLogprob>,
}

impl BackendResponse {
    pub fn validate(&self, request: &BackendRequest) -> Result<(), BackendError> {
        for t in &self.per_token {
            if t.top_k_alternatives.len() > request.top_k {
                return Err(BackendError::Malformed(format!(
                    "token {:?} reports {} alternatives, top_k is {}",
                    t.token,
                    t.top_k_alternatives.len(),
                    request.top_k
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no fixture for question {0}")]
    FixtureMissing(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
}

/// An answer backend. Must be shareable across worker threads.
pub trait BackendClient: Send + Sync {
    fn id(&self) -> String;
    fn answer(
        &self,
        question_id: &str,
        request: &BackendRequest,
    ) -> Result<BackendResponse, BackendError>;
}

/// Wire form of one `fixtures.jsonl` line for the mock backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub schema_version: u32,
    pub question_id: String,
    pub raw_text: String,
    #[serde(default)]
    pub per_token: Vec<TokenLogprob>,
}

/// Fixture-backed mock: byte-deterministic canned responses keyed by
/// question id, with an optional `fallback.json` for unknown ids.
#[derive(Debug)]
pub struct MockBackend {
    label: String,
    fixtures: BTreeMap<String, BackendResponse>,
    fallback: Option<BackendResponse>,
}

impl MockBackend {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, BackendError> {
        let dir = dir.as_ref();
        let fixtures_path = dir.join("fixtures.jsonl");
        let text = std::fs::read_to_string(&fixtures_path).map_err(|e| {
            BackendError::FixtureMissing(format!("{}: {e}", fixtures_path.display()))
        })?;
        let mut fixtures = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureRecord = serde_json::from_str(line).map_err(|e| {
                BackendError::Malformed(format!("{}:{}: {e}", fixtures_path.display(), i + 1))
            })?;
            fixtures.insert(
                record.question_id,
                BackendResponse {
                    raw_text: record.raw_text,
                    per_token: record.per_token,
                },
            );
        }
        let fallback = match std::fs::read_to_string(dir.join("fallback.json")) {
            Ok(text) => Some(serde_json::from_str(&text).map_err(|e| {
                BackendError::Malformed(format!("{}: {e}", dir.join("fallback.json").display()))
            })?),
            Err(_) => None,
        };
        Ok(Self {
            label: format!("mock:{}", dir.display()),
            fixtures,
            fallback,
        })
    }

    pub fn fixture_count(&self) -> usize {
        self.fixtures.len()
    }
}

impl BackendClient for MockBackend {
    fn id(&self) -> String {
        self.label.clone()
    }

    fn answer(
        &self,
        question_id: &str,
        _request: &BackendRequest,
    ) -> Result<BackendResponse, BackendError> {
        if let Some(resp) = self.fixtures.get(question_id) {
            return Ok(resp.clone());
        }
        match &self.fallback {
            Some(resp) => Ok(resp.clone()),
            None => Err(BackendError::FixtureMissing(question_id.to_string())),
        }
    }
}

/// HTTP transport: POSTs `{question_id, …request}` as JSON and expects a
/// [`BackendResponse`] body.
#[derive(Debug)]
pub struct HttpBackend {
    url: String,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>) -> Self {
        Self { url: url.into() }
    }
}

#[derive(Serialize)]
struct HttpAnswerRequest<'a> {
    question_id: &'a str,
    #[serde(flatten)]
    request: &'a BackendRequest,
}

impl BackendClient for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.url)
    }

    fn answer(
        &self,
        question_id: &str,
        request: &BackendRequest,
    ) -> Result<BackendResponse, BackendError> {
        let body = serde_json::to_string(&HttpAnswerRequest {
            question_id,
            request,
        })
        .map_err(|e| BackendError::Transport(e.to_string()))?;
        let mut resp = ureq::post(&self.url)
            .header("content-type", "application/json")
            .send(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let mut text = String::new();
        resp.body_mut()
            .as_reader()
            .read_to_string(&mut text)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))
    }
}

/// Parses a `--backend` argument: `mock:<dir>` or an http(s) URL.
pub fn open_backend(spec: &str) -> Result<Box<dyn BackendClient>, BackendError> {
    if let Some(dir) = spec.strip_prefix("mock:") {
        Ok(Box::new(MockBackend::open(PathBuf::from(dir))?))
    } else if spec.starts_with("http://") || spec.starts_with("https://") {
        Ok(Box::new(HttpBackend::new(spec)))
    } else {
        Err(BackendError::Malformed(format!(
            "backend must be mock:<dir> or an http(s) url, got {spec:?}"
        )))
    }
}
