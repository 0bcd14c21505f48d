//! Chat-completion client with label-constrained outputs and triple
//! sampling.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use loopwright_core::{CwLabel, Label, ModelSpec, PromptBundle, PromptMode, TaskKind, TripleRun};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Wire request. `allowed_outputs` lets servers with constrained decoding
/// restrict generation; others may ignore it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub allowed_outputs: Vec<String>,
    pub nonce: String,
}

impl ChatRequest {
    pub fn new(spec: &ModelSpec, prompt: &PromptBundle, nonce: String) -> Self {
        Self {
            model: spec.request_model().into(),
            messages: vec![
                ChatMessage { role: "system".into(), content: prompt.system_text.clone() },
                ChatMessage { role: "user".into(), content: prompt.user_text.clone() },
            ],
            temperature: spec.temperature,
            allowed_outputs: prompt.allowed_outputs.clone(),
            nonce,
        }
    }

    pub fn user_text(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == "user").map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("endpoint unavailable: {0}")]
    Unavailable(String),
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn complete(&self, model: &ModelSpec, request: &ChatRequest) -> Result<String, BackendError>;
}

/// Backend from a plain function; handy for scripted endpoints.
pub struct FnBackend<F>(pub F);

#[async_trait]
impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ModelSpec, &ChatRequest) -> Result<String, BackendError> + Send + Sync,
{
    async fn complete(&self, model: &ModelSpec, request: &ChatRequest) -> Result<String, BackendError> {
        (self.0)(model, request)
    }
}

/// POSTs the request as JSON to the model's endpoint URL.
pub struct HttpBackend {
    client: reqwest::Client,
}

impl HttpBackend {
    pub fn new() -> Self {
        Self { client: reqwest::Client::new() }
    }
}

impl Default for HttpBackend {
    fn default() -> Self {
        Self::new()
    }
}

/// Accepts `{"content": ...}` or OpenAI-style `choices`.
pub fn response_text(body: &Value) -> Option<String> {
    if let Some(s) = body.get("content").and_then(Value::as_str) {
        return Some(s.into());
    }
    let choice = body.get("choices")?.get(0)?;
    choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .map(String::from)
}

#[async_trait]
impl ChatBackend for HttpBackend {
    async fn complete(&self, model: &ModelSpec, request: &ChatRequest) -> Result<String, BackendError> {
        let mut builder = self.client.post(&model.endpoint_url).json(request);
        if let Some(var) = &model.api_key_env {
            let key = std::env::var(var).map_err(|_| BackendError::Unavailable(format!("{var} is not set")))?;
            builder = builder.bearer_auth(key);
        }
        let unavailable = |e: reqwest::Error| BackendError::Unavailable(e.to_string());
        let response = builder.send().await.map_err(unavailable)?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::Unavailable(format!("{} returned {status}", model.endpoint_url)));
        }
        let body: Value = response.json().await.map_err(unavailable)?;
        response_text(&body).ok_or_else(|| BackendError::Unavailable("response has no completion text".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("model {model}: {message}")]
    EndpointUnavailable { model: String, message: String },
    #[error("{item}: slot {slot} produced no allowed label in {attempts} attempts (last output {last_output:?})")]
    OutputNeverValid { item: String, slot: usize, attempts: u32, last_output: String },
    #[error("{0}: triple sampling needs a check-worthiness prompt")]
    WrongTask(String),
}

/// One parsed completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    /// Index into the prompt's allowed outputs.
    pub index: usize,
    pub raw: String,
    pub retries: u32,
}

#[derive(Serialize)]
struct AuditLine<'a> {
    model: &'a str,
    request: &'a ChatRequest,
    #[serde(skip_serializing_if = "Option::is_none")]
    response: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    limits: Mutex<HashMap<String, Arc<Semaphore>>>,
    audit: Option<Mutex<BufWriter<File>>>,
    requests: AtomicU64,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self { backend, limits: Mutex::new(HashMap::new()), audit: None, requests: AtomicU64::new(0) }
    }

    /// Appends every request and its response to a JSONL file.
    pub fn with_audit(mut self, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.audit = Some(Mutex::new(BufWriter::new(file)));
        Ok(self)
    }

    /// Requests sent so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    /// Shared limiter per endpoint URL, sized by the first model seen
    /// on that endpoint.
    fn limiter(&self, spec: &ModelSpec) -> Arc<Semaphore> {
        let mut limits = self.limits.lock().expect("limiter table");
        limits
            .entry(spec.endpoint_url.clone())
            .or_insert_with(|| Arc::new(Semaphore::new(spec.max_concurrency.max(1))))
            .clone()
    }

    fn audit(&self, spec: &ModelSpec, request: &ChatRequest, result: &Result<String, BackendError>) {
        let Some(audit) = &self.audit else { return };
        let line = AuditLine {
            model: &spec.registry_key,
            request,
            response: result.as_ref().ok().map(String::as_str),
            error: result.as_ref().err().map(ToString::to_string),
        };
        let mut out = audit.lock().expect("audit writer");
        let _ = serde_json::to_writer(&mut *out, &line);
        let _ = out.write_all(b"\n");
        let _ = out.flush();
    }

    /// One slot: send, parse against the prompt's allowed outputs, retry
    /// up to `max_retries` times on an unparseable answer.
    pub async fn complete_constrained(
        &self,
        spec: &ModelSpec,
        prompt: &PromptBundle,
        item: &str,
        slot: usize,
    ) -> Result<Completion, GatewayError> {
        let limiter = self.limiter(spec);
        let mut last_output = String::new();
        for attempt in 0..=spec.max_retries {
            let request = ChatRequest::new(spec, prompt, format!("{item}:{slot}:{attempt}"));
            let result = {
                let _permit = limiter.acquire().await.expect("limiter is never closed");
                self.requests.fetch_add(1, Ordering::SeqCst);
                self.backend.complete(spec, &request).await
            };
            self.audit(spec, &request, &result);
            let raw = result.map_err(|e| GatewayError::EndpointUnavailable {
                model: spec.registry_key.clone(),
                message: e.to_string(),
            })?;
            if let Ok(index) = prompt.parse(&raw) {
                return Ok(Completion { index, raw, retries: attempt });
            }
            last_output = raw;
        }
        Err(GatewayError::OutputNeverValid {
            item: item.into(),
            slot,
            attempts: spec.max_retries + 1,
            last_output,
        })
    }

    /// Three independent check-worthiness labels for one claim. Slots run
    /// concurrently; results are ordered by slot.
    pub async fn sample_triple(
        &self,
        spec: &ModelSpec,
        prompt: &PromptBundle,
        claim_id: &str,
        mode: PromptMode,
    ) -> Result<TripleRun, GatewayError> {
        if prompt.task_kind != TaskKind::CheckWorthiness {
            return Err(GatewayError::WrongTask(claim_id.into()));
        }
        let (a, b, c) = tokio::join!(
            self.complete_constrained(spec, prompt, claim_id, 0),
            self.complete_constrained(spec, prompt, claim_id, 1),
            self.complete_constrained(spec, prompt, claim_id, 2),
        );
        let slots = [a?, b?, c?];
        let label = |c: &Completion| {
            CwLabel::from_name(&prompt.allowed_outputs[c.index]).expect("bundle lists CW label names")
        };
        Ok(TripleRun {
            claim_id: claim_id.into(),
            model: spec.registry_key.clone(),
            prompt_mode: mode,
            labels: [label(&slots[0]), label(&slots[1]), label(&slots[2])],
            retries: [slots[0].retries, slots[1].retries, slots[2].retries],
            raw_outputs: slots.map(|c| c.raw),
        })
    }
}

/// JSON body a simple label server would return.
pub fn content_body(text: &str) -> Value {
    json!({ "content": text })
}
