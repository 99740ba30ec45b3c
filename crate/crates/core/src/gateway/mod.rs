//! Uniform completion interface over pluggable model backends.
//!
//! Two backend kinds sit behind one `complete` call: a live HTTP backend
//! speaking a chat-completions-style wire protocol, and a record/replay
//! backend that looks completions up by request key for deterministic
//! offline runs. Request keys are SHA-256 digests of the canonical JSON
//! form of `(backend_id, messages, params)` (see [`crate::canon`]), so
//! fixtures are portable across machines.

pub mod fixture;
mod http;
mod replay;
pub mod stub;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::canon;
use crate::error::{Error, Result};

pub use fixture::{record_fixture, FixtureEntry, FixtureStats, TranscriptEntry};

/// Message role in a chat-style exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One message of a completion request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// Generation parameters forwarded to the backend.
///
/// `extra` is an opaque passthrough map; core fields always win on key
/// collisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
    #[serde(default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

fn default_max_tokens() -> u32 {
    1024
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            max_tokens: default_max_tokens(),
            temperature: 0.0,
            stop_sequences: Vec::new(),
            extra: serde_json::Map::new(),
        }
    }
}

impl GenerationParams {
    fn validate(&self, backend_id: &str) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(Error::config(format!(
                "backend '{backend_id}': default_params.max_tokens must be >= 1"
            )));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::config(format!(
                "backend '{backend_id}': default_params.temperature must be >= 0"
            )));
        }
        Ok(())
    }
}

/// Transport failure classes a retry policy may treat as retryable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetryClass {
    /// HTTP 429.
    RateLimit,
    /// HTTP 5xx and connection-level failures.
    ServerError,
    /// Per-attempt deadline exceeded.
    Timeout,
}

/// Retry policy with deterministic exponential backoff (no jitter):
/// the sleep after failed attempt `n` (0-indexed) is `base_backoff_ms * 2^n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_base_backoff_ms")]
    pub base_backoff_ms: u64,
    #[serde(default = "default_retryable")]
    pub retryable_statuses: Vec<RetryClass>,
}

fn default_max_attempts() -> u32 {
    3
}

fn default_base_backoff_ms() -> u64 {
    250
}

fn default_retryable() -> Vec<RetryClass> {
    vec![
        RetryClass::RateLimit,
        RetryClass::ServerError,
        RetryClass::Timeout,
    ]
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: default_max_attempts(),
            base_backoff_ms: default_base_backoff_ms(),
            retryable_statuses: default_retryable(),
        }
    }
}

impl RetryPolicy {
    pub fn is_retryable(&self, class: RetryClass) -> bool {
        self.retryable_statuses.contains(&class)
    }
}

/// Backend transport kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Replay,
}

/// Declarative backend configuration, one entry per registry slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub id: String,
    pub kind: BackendKind,
    /// Chat-completions endpoint URL (http only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    /// Name of the environment variable holding the bearer token (http
    /// only). Resolved lazily at request time, never at load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token_env: Option<String>,
    /// Replay fixture path (replay only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_path: Option<PathBuf>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub default_params: GenerationParams,
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl BackendConfig {
    fn validate(&self, entry_index: usize) -> Result<()> {
        let entry = format!("backend entry {} (id '{}')", entry_index, self.id);
        if self.id.is_empty() {
            return Err(Error::config(format!("{entry}: missing field \"id\"")));
        }
        if self.timeout_ms == 0 {
            return Err(Error::config(format!("{entry}: timeout_ms must be > 0")));
        }
        if self.retry.max_attempts == 0 {
            return Err(Error::config(format!(
                "{entry}: retry.max_attempts must be >= 1"
            )));
        }
        match self.kind {
            BackendKind::Http => {
                if self.endpoint.is_none() {
                    return Err(Error::config(format!(
                        "{entry}: missing field \"endpoint\" required for kind http"
                    )));
                }
                if self.model_name.is_none() {
                    return Err(Error::config(format!(
                        "{entry}: missing field \"model_name\" required for kind http"
                    )));
                }
            }
            BackendKind::Replay => {
                if self.fixture_path.is_none() {
                    return Err(Error::config(format!(
                        "{entry}: missing field \"fixture_path\" required for kind replay"
                    )));
                }
            }
        }
        self.default_params.validate(&self.id)
    }
}

/// A completion request bound for one backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub backend_id: String,
    pub messages: Vec<Message>,
    pub params: GenerationParams,
}

impl CompletionRequest {
    pub fn new(
        backend_id: impl Into<String>,
        messages: Vec<Message>,
        params: GenerationParams,
    ) -> Self {
        CompletionRequest {
            backend_id: backend_id.into(),
            messages,
            params,
        }
    }

    /// Content hash identifying this request for caching and replay.
    ///
    /// A pure function of `(backend_id, messages, params)`: SHA-256 over
    /// the canonical JSON rendering, so key equality is independent of
    /// map ordering and re-serialization.
    pub fn request_key(&self) -> String {
        let value = json!({
            "backend_id": self.backend_id,
            "messages": self.messages,
            "params": self.params,
        });
        canon::digest_str(&canon::canonical_json(&value))
    }
}

/// Token usage reported by a backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// A completed model call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
    /// Wall-time for http backends (or the server-reported processing
    /// time when the response carries an `x-processing-ms` header);
    /// read from the fixture for replay backends.
    pub latency_ms: u64,
    pub retries_used: u32,
    pub backend_id: String,
}

enum BackendImpl {
    Http(http::HttpBackend),
    Replay(replay::ReplayBackend),
}

struct Backend {
    config: BackendConfig,
    inner: BackendImpl,
}

/// Registry of ready backends, shareable across worker threads.
pub struct BackendRegistry {
    backends: BTreeMap<String, Backend>,
}

impl std::fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendRegistry")
            .field("ids", &self.backends.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl BackendRegistry {
    /// Builds a registry from validated configs. Replay fixtures are read
    /// eagerly; http secrets are not touched until the first request.
    pub fn from_configs(configs: Vec<BackendConfig>) -> Result<Self> {
        let mut backends = BTreeMap::new();
        for (index, config) in configs.into_iter().enumerate() {
            config.validate(index)?;
            if let Some(previous) = backends.get(&config.id) {
                let previous: &Backend = previous;
                return Err(Error::config(format!(
                    "duplicate backend id '{}' (conflicts with earlier entry of kind {:?})",
                    config.id, previous.config.kind
                )));
            }
            let inner = match config.kind {
                BackendKind::Http => BackendImpl::Http(http::HttpBackend::new(&config)?),
                BackendKind::Replay => {
                    let path = config.fixture_path.as_ref().expect("validated");
                    BackendImpl::Replay(replay::ReplayBackend::load(&config.id, path)?)
                }
            };
            backends.insert(config.id.clone(), Backend { config, inner });
        }
        Ok(BackendRegistry { backends })
    }

    pub fn contains(&self, backend_id: &str) -> bool {
        self.backends.contains_key(backend_id)
    }

    pub fn config(&self, backend_id: &str) -> Option<&BackendConfig> {
        self.backends.get(backend_id).map(|b| &b.config)
    }

    /// Default generation parameters declared for a backend.
    pub fn default_params(&self, backend_id: &str) -> Result<GenerationParams> {
        self.config(backend_id)
            .map(|c| c.default_params.clone())
            .ok_or_else(|| Error::config(format!("unknown backend id '{backend_id}'")))
    }

    /// Executes a completion request against its backend.
    ///
    /// Replay completions are pure lookups by request key. Http
    /// completions retry per the backend policy with deterministic
    /// exponential backoff and a per-attempt timeout.
    pub fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        let backend = self
            .backends
            .get(&request.backend_id)
            .ok_or_else(|| Error::config(format!("unknown backend id '{}'", request.backend_id)))?;
        match &backend.inner {
            BackendImpl::Replay(replay) => replay.complete(request),
            BackendImpl::Http(http) => http.complete(request, &backend.config),
        }
    }
}

/// Parses a backend-registry document: either a top-level JSON array of
/// backend configs or an object with a `backends` key.
pub fn load_backends(config_document: &str) -> Result<BackendRegistry> {
    let configs = parse_backend_configs(config_document)?;
    BackendRegistry::from_configs(configs)
}

/// Extracts the backend config list from a registry document without
/// building the registry (used for digests).
pub fn parse_backend_configs(config_document: &str) -> Result<Vec<BackendConfig>> {
    let value: serde_json::Value = serde_json::from_str(config_document)
        .map_err(|e| Error::config(format!("backend config is not valid JSON: {e}")))?;
    let list = match &value {
        serde_json::Value::Array(_) => value.clone(),
        serde_json::Value::Object(map) => map
            .get("backends")
            .cloned()
            .ok_or_else(|| Error::config("backend config has no \"backends\" key".to_string()))?,
        _ => {
            return Err(Error::config(
                "backend config must be an array or an object with a \"backends\" key".to_string(),
            ))
        }
    };
    serde_json::from_value(list).map_err(|e| Error::config(format!("bad backend entry: {e}")))
}

/// Resolves relative `fixture_path` entries against a base directory
/// (typically the config file's parent).
pub fn resolve_fixture_paths(configs: &mut [BackendConfig], base: &Path) {
    for config in configs {
        if let Some(path) = &config.fixture_path {
            if path.is_relative() {
                config.fixture_path = Some(base.join(path));
            }
        }
    }
}
