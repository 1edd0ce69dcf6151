//! Model backends: an HTTP chat-completion client and the stub-directory
//! loader for the scripted model.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use consensus_core::agent::{
    ChatRole, CompletionRequest, LanguageModel, ModelError, ModelPool, ModelWeight, StubScripts,
};
use consensus_core::sim::stub_pool;
use serde_json::{json, Value};

use crate::config::{ModelEndpoint, RuntimeConfig};

/// Client for the common chat-completion JSON shape:
/// `{model, messages: [{role, content}]}` in, `choices[0].message.content` out.
pub struct HttpChatModel {
    label: String,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    retries: u32,
    client: reqwest::blocking::Client,
}

impl HttpChatModel {
    pub fn new(ep: &ModelEndpoint, api_key: Option<String>) -> Result<Self, ModelError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(ep.timeout_s))
            .build()
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        Ok(Self {
            label: ep.name.clone(),
            endpoint: ep.endpoint.clone(),
            model: ep.model.clone(),
            api_key,
            retries: ep.retries,
            client,
        })
    }

    /// Resolves the key from the environment.
    pub fn from_env(ep: &ModelEndpoint) -> Result<Self, String> {
        let key = match &ep.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| format!("model {}: {var} is not set", ep.name))?),
            None => None,
        };
        Self::new(ep, key).map_err(|e| e.to_string())
    }

    pub fn body(&self, req: &CompletionRequest) -> Value {
        json!({ "model": self.model, "messages": request_messages(req) })
    }

    fn once(&self, body: &Value) -> Result<String, ModelError> {
        let mut call = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| {
            if e.is_timeout() {
                ModelError::Timeout
            } else {
                ModelError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ModelError::Transport(format!("HTTP {status}")));
        }
        let v: Value = resp.json().map_err(|e| ModelError::BadResponse(e.to_string()))?;
        completion_text(&v)
    }
}

impl LanguageModel for HttpChatModel {
    fn label(&self) -> &str {
        &self.label
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, ModelError> {
        let body = self.body(req);
        let mut last = ModelError::Transport("not attempted".into());
        for _ in 0..=self.retries {
            match self.once(&body) {
                Ok(t) => return Ok(t),
                Err(e @ ModelError::BadResponse(_)) => return Err(e),
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}

pub fn request_messages(req: &CompletionRequest) -> Vec<Value> {
    let mut msgs = vec![json!({ "role": "system", "content": req.system })];
    for t in &req.transcript {
        let role = match t.role {
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        };
        msgs.push(json!({ "role": role, "content": t.content }));
    }
    if let Some(i) = &req.instruction {
        msgs.push(json!({ "role": "user", "content": i }));
    }
    msgs
}

pub fn completion_text(v: &Value) -> Result<String, ModelError> {
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ModelError::BadResponse("missing choices[0].message.content".into()))
}

/// Reads `*.txt` scripts: `replies`, `farewells`, `summaries`, `referee`,
/// `referee-<personality>`, and `<seed>-<turn>` for exact turn overrides.
/// Files not present keep the shipped defaults.
pub fn load_stub_dir(dir: &Path) -> Result<StubScripts, String> {
    let mut scripts = StubScripts::default();
    let entries = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut paths: Vec<_> = entries.filter_map(Result::ok).map(|e| e.path()).collect();
    paths.sort();
    for path in paths.into_iter().filter(|p| p.extension().is_some_and(|x| x == "txt")) {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let src = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        if !(scripts.load_turn(&stem, &src) || scripts.load(&stem, &src)) {
            return Err(format!("{}: unknown script name {stem:?}", path.display()));
        }
    }
    Ok(scripts)
}

/// Model pool and mix for a runtime: the stub when `stub_dir` is set or no
/// endpoint is configured, the HTTP endpoints otherwise.
pub fn build_pool(cfg: &RuntimeConfig) -> Result<(Arc<ModelPool>, Vec<ModelWeight>), String> {
    if cfg.stub_dir.is_some() || cfg.models.is_empty() {
        let scripts = match &cfg.stub_dir {
            Some(d) => load_stub_dir(d)?,
            None => StubScripts::default(),
        };
        let pool = stub_pool(scripts);
        let mix = pool.names().map(|n| ModelWeight { name: n.to_string(), weight: 1.0 }).collect();
        return Ok((pool, mix));
    }
    // retries are handled per endpoint
    let mut pool = ModelPool::new(0);
    let mut mix = Vec::new();
    for ep in &cfg.models {
        pool = pool.with(&ep.name, Arc::new(HttpChatModel::from_env(ep)?));
        mix.push(ModelWeight { name: ep.name.clone(), weight: ep.weight });
    }
    Ok((Arc::new(pool), mix))
}
