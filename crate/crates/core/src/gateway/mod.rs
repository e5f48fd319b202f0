//! Text-generation backends behind one interface.
//!
//! Every backend returns the same [`GenerationResult`] shape. Failures are
//! typed so the pipeline can tell a dead endpoint from a missing recording.

mod extract;
mod mock;
mod remote;
mod replay;

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::{ChatExchange, Stage};

pub use extract::{extract_code_block, ExtractError};
pub use mock::{FnBackend, MockBackend};
pub use remote::RemoteBackend;
pub use replay::{cache_key, RecordingBackend, ReplayBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub messages: Vec<ChatExchange>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("messages must not be empty".into()));
        }
        if !self.temperature.is_finite() || !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be within 0..2, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Stage tag of the prompt, taken from the last message.
    pub fn stage(&self) -> Option<Stage> {
        self.messages.last().map(|m| m.stage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    pub latency_ms: u64,
    pub backend_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    RemoteApi,
    Mock,
    Replay,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_base_ms() -> u64 {
    500
}

/// Backend selection. The API key itself is never part of a config; only the
/// name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
    /// Mock script directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    /// Replay cache directory. With `remote_api`, successful calls are
    /// recorded into it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    /// Process-wide cap on remote calls; 0 disables the limiter.
    #[serde(default)]
    pub requests_per_minute: u32,
}

impl BackendConfig {
    pub fn mock(script: impl Into<PathBuf>) -> Self {
        BackendConfig { script: Some(script.into()), ..Self::base(BackendKind::Mock) }
    }

    pub fn replay(cache: impl Into<PathBuf>, model: &str) -> Self {
        BackendConfig { cache: Some(cache.into()), model: model.to_string(), ..Self::base(BackendKind::Replay) }
    }

    pub fn remote(endpoint: &str, model: &str) -> Self {
        BackendConfig {
            endpoint: Some(endpoint.to_string()),
            model: model.to_string(),
            ..Self::base(BackendKind::RemoteApi)
        }
    }

    fn base(kind: BackendKind) -> Self {
        BackendConfig {
            kind,
            endpoint: None,
            model: String::new(),
            api_key_env: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_base_ms(),
            script: None,
            cache: None,
            requests_per_minute: 0,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.kind {
            BackendKind::RemoteApi => {
                if self.endpoint.as_deref().map_or(true, str::is_empty) {
                    return Err(GatewayError::Config("remote_api backend requires an endpoint".into()));
                }
                if self.model.is_empty() {
                    return Err(GatewayError::Config("remote_api backend requires a model name".into()));
                }
                if self.timeout_secs == 0 {
                    return Err(GatewayError::Config("timeout_secs must be positive".into()));
                }
            }
            BackendKind::Mock if self.script.is_none() => {
                return Err(GatewayError::Config("mock backend requires a script path".into()))
            }
            BackendKind::Replay if self.cache.is_none() => {
                return Err(GatewayError::Config("replay backend requires a cache path".into()))
            }
            _ => {}
        }
        Ok(())
    }

    /// Resolves relative script and cache paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.script, &mut self.cache].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("network failure after {attempts} attempts: {last_error}")]
    NetworkExhausted { attempts: u32, last_error: String },
    #[error("authentication rejected by the endpoint (HTTP {status})")]
    AuthFailure { status: u16 },
    #[error("no recorded response for request {key}")]
    ReplayMiss { key: String },
    #[error("mock script has no response left for stage {stage}")]
    ScriptExhausted { stage: String },
    #[error("malformed backend response: {0}")]
    BadResponse(String),
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl GatewayError {
    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        GatewayError::Io { path: path.display().to_string(), reason: err.to_string() }
    }
}

pub trait Backend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError>;
    fn id(&self) -> String;
}

/// Spaces calls evenly so at most `per_minute` start in any minute.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        RateLimiter { interval: Duration::from_secs(60) / per_minute.max(1), next: Mutex::new(Instant::now()) }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Shareable handle used by the pipeline. Cloning shares the backend and the
/// rate limiter.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    limiter: Option<Arc<RateLimiter>>,
}

impl Gateway {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Gateway { backend: Arc::new(backend), limiter: None }
    }

    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let backend: Arc<dyn Backend> = match config.kind {
            BackendKind::Mock => Arc::new(MockBackend::load(config.script.as_deref().unwrap_or(Path::new("")))?),
            BackendKind::Replay => Arc::new(ReplayBackend::new(config.cache.clone().unwrap_or_default())),
            BackendKind::RemoteApi => {
                let remote = RemoteBackend::new(config)?;
                match &config.cache {
                    Some(dir) => Arc::new(RecordingBackend::new(remote, dir.clone())),
                    None => Arc::new(remote),
                }
            }
        };
        let limiter = (config.kind == BackendKind::RemoteApi && config.requests_per_minute > 0)
            .then(|| Arc::new(RateLimiter::new(config.requests_per_minute)));
        Ok(Gateway { backend, limiter })
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        request.validate()?;
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        self.backend.generate(request)
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("backend", &self.backend.id()).finish()
    }
}
