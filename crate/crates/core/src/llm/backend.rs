//! Completion backends: an HTTP chat-completion client and a scripted replay
//! backend for offline runs.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{LlmError, TransportError};
use crate::llm::template::Role;
use crate::net::{HttpRequest, HttpTransport};

/// What a backend sees for one call.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub asset: &'a str,
    pub role: Role,
    pub prompt: &'a str,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, TransportError>;

    /// Replay position, saved at round boundaries. Stateless backends return `None`.
    fn cursor(&self) -> Option<Value> {
        None
    }

    fn restore(&self, _cursor: &Value) -> Result<(), LlmError> {
        Ok(())
    }
}

/// OpenAI-style `/chat/completions` client.
pub struct HttpBackend {
    transport: Arc<dyn HttpTransport>,
    base_url: String,
    model: String,
    temperature: Option<f64>,
    api_key: Option<String>,
    id: String,
}

pub const API_KEY_ENV: &str = "TUSO_API_KEY";

impl HttpBackend {
    pub fn new(transport: Arc<dyn HttpTransport>, base_url: &str, model: &str, temperature: Option<f64>) -> Self {
        HttpBackend {
            transport,
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            temperature,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            id: format!("http:{model}"),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    fn request_body(&self, prompt: &str) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
        });
        if let Some(t) = self.temperature {
            body["temperature"] = json!(t);
        }
        body
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, TransportError> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut http = HttpRequest::post(url, self.request_body(request.prompt).to_string())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            http = http.header("Authorization", format!("Bearer {key}"));
        }
        let response = self.transport.send(&http)?;
        if !(200..300).contains(&response.status) {
            let snippet: String = response.body.chars().take(200).collect();
            return Err(TransportError(format!("HTTP {}: {snippet}", response.status)));
        }
        let parsed: Value = serde_json::from_str(&response.body)
            .map_err(|e| TransportError(format!("malformed completion body: {e}")))?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError("completion body has no choices[0].message.content".to_string()))
    }
}

/// One scripted reply: text, or a transport failure to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptReply {
    Text(String),
    Error { error: String },
}

impl ScriptReply {
    fn into_result(self) -> Result<String, TransportError> {
        match self {
            ScriptReply::Text(text) => Ok(text),
            ScriptReply::Error { error } => Err(TransportError(error)),
        }
    }
}

/// Scripted replies, looked up per call in this order: the asset's queue,
/// the role's queue, the `repeat` entry for the asset or role (served
/// indefinitely), then the shared queue.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Script {
    pub queue: Vec<ScriptReply>,
    pub by_asset: BTreeMap<String, Vec<ScriptReply>>,
    pub by_role: BTreeMap<String, Vec<ScriptReply>>,
    pub repeat: BTreeMap<String, String>,
}

impl Script {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))
    }

    /// A script that serves `replies` in order to any caller.
    pub fn queue<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Script { queue: replies.into_iter().map(|r| ScriptReply::Text(r.into())).collect(), ..Script::default() }
    }
}

#[derive(Debug, Default)]
struct ScriptState {
    queues: BTreeMap<String, VecDeque<ScriptReply>>,
    consumed: BTreeMap<String, usize>,
    log: Vec<(String, String)>,
}

/// Deterministic replay backend. Calls are served under a lock, so draw order
/// follows call order.
pub struct ScriptedBackend {
    script: Script,
    state: Mutex<ScriptState>,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        let backend = ScriptedBackend { script, state: Mutex::new(ScriptState::default()) };
        backend.reset(&BTreeMap::new());
        backend
    }

    fn reset(&self, consumed: &BTreeMap<String, usize>) {
        let mut queues = BTreeMap::new();
        queues.insert("queue".to_string(), self.script.queue.iter().cloned().collect::<VecDeque<_>>());
        for (name, replies) in &self.script.by_asset {
            queues.insert(format!("asset:{name}"), replies.iter().cloned().collect());
        }
        for (name, replies) in &self.script.by_role {
            queues.insert(format!("role:{name}"), replies.iter().cloned().collect());
        }
        for (key, n) in consumed {
            if let Some(q) = queues.get_mut(key) {
                q.drain(..(*n).min(q.len()));
            }
        }
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        state.queues = queues;
        state.consumed = consumed.clone();
    }

    /// Every `(asset, prompt)` served so far, in order.
    pub fn prompts(&self) -> Vec<(String, String)> {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).log.clone()
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, TransportError> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        state.log.push((request.asset.to_string(), request.prompt.to_string()));
        for key in [format!("asset:{}", request.asset), format!("role:{}", request.role)] {
            let reply = state.queues.get_mut(&key).and_then(VecDeque::pop_front);
            if let Some(reply) = reply {
                *state.consumed.entry(key).or_insert(0) += 1;
                return reply.into_result();
            }
        }
        let repeat = self.script.repeat.get(request.asset).or_else(|| self.script.repeat.get(request.role.name()));
        if let Some(text) = repeat {
            return Ok(text.clone());
        }
        match state.queues.get_mut("queue").and_then(VecDeque::pop_front) {
            Some(reply) => {
                *state.consumed.entry("queue".to_string()).or_insert(0) += 1;
                reply.into_result()
            }
            None => Err(TransportError(format!("script exhausted for asset `{}`", request.asset))),
        }
    }

    fn cursor(&self) -> Option<Value> {
        let state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        serde_json::to_value(&state.consumed).ok()
    }

    fn restore(&self, cursor: &Value) -> Result<(), LlmError> {
        let consumed: BTreeMap<String, usize> =
            serde_json::from_value(cursor.clone()).map_err(|e| LlmError::Script(format!("bad cursor: {e}")))?;
        self.reset(&consumed);
        Ok(())
    }
}
