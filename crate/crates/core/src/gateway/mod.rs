//! Prompt rendering, text-generation backends and stage output parsing.
//!
//! A [`BackendRegistry`] maps backend ids to [`Backend`] implementations. The
//! [`MockBackend`] emits the canonical stage formats from a hash of the prompt and
//! seed, which lets the whole pipeline run without a model.

mod http;
mod mock;
mod parse;
mod scripted;
mod template;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::Stage;

pub use http::HttpBackend;
pub use mock::MockBackend;
pub use parse::{
    format_stage1, format_stage2, format_stage3, parse_stage1, parse_stage2, parse_stage3,
    MalformedOutput, Reject, Stage1Parse, Stage2Parse,
};
pub use scripted::ScriptedBackend;
pub use template::{
    render_prompt, renderer_placeholders, required_placeholders, PromptContext, PromptTemplate,
    RenderError, TemplateSet, KNOWN_PLACEHOLDERS,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub rendered_prompt: String,
    pub stage: Stage,
    pub seed: Option<u64>,
    pub backend_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub raw_text: String,
    pub backend_id: String,
    pub latency: Duration,
    pub fingerprint: String,
}

/// Hex SHA-256 over the length-prefixed prompt, backend id and seed.
pub fn fingerprint(rendered_prompt: &str, backend_id: &str, seed: Option<u64>) -> String {
    let mut h = Sha256::new();
    for part in [rendered_prompt.as_bytes(), backend_id.as_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    match seed {
        Some(s) => {
            h.update([1u8]);
            h.update(s.to_le_bytes());
        }
        None => h.update([0u8]),
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("unknown backend: {0}")]
    UnknownBackend(String),
    #[error("rendered prompt is empty")]
    EmptyPrompt,
    #[error("backend {backend} unreachable: {detail}")]
    Unreachable { backend: String, detail: String },
    #[error("backend {backend} timed out after {after:?}")]
    Timeout { backend: String, after: Duration },
    #[error("backend {backend} returned status {status}: {body}")]
    Status { backend: String, status: u16, body: String },
    #[error("backend {backend} sent an unusable response: {detail}")]
    Protocol { backend: String, detail: String },
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Unreachable { .. } | GatewayError::Timeout { .. } => true,
            GatewayError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A text-generation backend. Implementations must be safe to call concurrently.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &GenerationRequest) -> Result<String, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

fn default_timeout_s() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    3
}

fn default_concurrency() -> usize {
    4
}

/// One entry of the backend configuration file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub backend_id: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
}

impl BackendConfig {
    pub fn mock(id: impl Into<String>) -> Self {
        BackendConfig {
            backend_id: id.into(),
            kind: BackendKind::Mock,
            endpoint: None,
            timeout_s: default_timeout_s(),
            max_retries: default_max_retries(),
            auth_env: None,
            max_concurrency: default_concurrency(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsFile {
    pub backends: Vec<BackendConfig>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed backend config: {0}")]
    Parse(String),
    #[error("backend {0}: http backends need an endpoint")]
    MissingEndpoint(String),
    #[error("duplicate backend id: {0}")]
    Duplicate(String),
}

impl BackendsFile {
    pub fn default_file() -> Self {
        BackendsFile { backends: vec![BackendConfig::mock("mock")] }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

// Counting semaphore for the per-backend concurrency cap.
struct Limiter {
    cap: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn new(cap: usize) -> Self {
        Limiter { cap: cap.max(1), in_flight: Mutex::new(0), freed: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

struct Registered {
    backend: Arc<dyn Backend>,
    max_retries: u32,
    limiter: Limiter,
}

/// Backends by id. Stateless per request; many generations may be in flight.
#[derive(Default)]
pub struct BackendRegistry {
    backends: BTreeMap<String, Registered>,
}

impl std::fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendRegistry").field("backends", &self.ids()).finish()
    }
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry holding only the deterministic mock under the id `mock`.
    pub fn with_mock() -> Self {
        let mut r = Self::new();
        r.register("mock", Arc::new(MockBackend::new()), 0, default_concurrency());
        r
    }

    pub fn from_configs(configs: &[BackendConfig]) -> Result<Self, ConfigError> {
        let mut r = Self::new();
        for c in configs {
            if r.contains(&c.backend_id) {
                return Err(ConfigError::Duplicate(c.backend_id.clone()));
            }
            let backend: Arc<dyn Backend> = match c.kind {
                BackendKind::Mock => Arc::new(MockBackend::new()),
                BackendKind::Http => {
                    let endpoint = c
                        .endpoint
                        .clone()
                        .ok_or_else(|| ConfigError::MissingEndpoint(c.backend_id.clone()))?;
                    Arc::new(HttpBackend::new(
                        &c.backend_id,
                        endpoint,
                        Duration::from_secs(c.timeout_s),
                        c.auth_env.clone(),
                    ))
                }
            };
            r.register(&c.backend_id, backend, c.max_retries, c.max_concurrency);
        }
        Ok(r)
    }

    pub fn register(&mut self, id: &str, backend: Arc<dyn Backend>, max_retries: u32, max_concurrency: usize) {
        self.backends.insert(
            id.to_string(),
            Registered { backend, max_retries, limiter: Limiter::new(max_concurrency) },
        );
    }

    pub fn contains(&self, id: &str) -> bool {
        self.backends.contains_key(id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.backends.keys().map(String::as_str).collect()
    }

    /// Sends the request, retrying retryable transport failures up to the backend's
    /// `max_retries`.
    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        let entry = self
            .backends
            .get(&request.backend_id)
            .ok_or_else(|| GatewayError::UnknownBackend(request.backend_id.clone()))?;
        if request.rendered_prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let _permit = entry.limiter.acquire();
        let started = Instant::now();
        let mut tries = 0;
        let raw_text = loop {
            match entry.backend.complete(request) {
                Ok(text) => break text,
                Err(e) if e.is_retryable() && tries < entry.max_retries => {
                    tries += 1;
                    tracing::warn!(backend = %request.backend_id, error = %e, tries, "retrying generation");
                    std::thread::sleep(Duration::from_millis(50 * u64::from(tries)));
                }
                Err(e) => return Err(e),
            }
        };
        Ok(GenerationResponse {
            raw_text,
            backend_id: request.backend_id.clone(),
            latency: started.elapsed(),
            fingerprint: fingerprint(&request.rendered_prompt, &request.backend_id, request.seed),
        })
    }
}
