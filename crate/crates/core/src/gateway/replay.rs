use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{Backend, FinishReason, GatewayError, GenerationRequest, GenerationResult, Usage};

/// Content hash of the fields that determine a response: message roles and
/// contents, model, temperature and seed. Stage tags, timing and token
/// budgets are excluded.
pub fn cache_key(request: &GenerationRequest) -> String {
    let canonical = json!({
        "messages": request
            .messages
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect::<Vec<_>>(),
        "model": request.model,
        "temperature": request.temperature,
        "seed": request.seed,
    });
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordedMessage {
    role: String,
    content: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordedRequest {
    model: String,
    temperature: f64,
    #[serde(default)]
    seed: Option<u64>,
    messages: Vec<RecordedMessage>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordedResponse {
    text: String,
    finish_reason: FinishReason,
    #[serde(default)]
    usage: Usage,
}

/// One cache file, `<key>.json`.
#[derive(Debug, Serialize, Deserialize)]
struct Recording {
    request: RecordedRequest,
    response: RecordedResponse,
}

/// Serves recorded responses from a content-addressed directory.
#[derive(Debug)]
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayBackend { dir: dir.into() }
    }

    pub fn path_for(&self, request: &GenerationRequest) -> PathBuf {
        self.dir.join(format!("{}.json", cache_key(request)))
    }
}

impl Backend for ReplayBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        let key = cache_key(request);
        let path = self.dir.join(format!("{key}.json"));
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(GatewayError::ReplayMiss { key }),
            Err(e) => return Err(GatewayError::io(&path, e)),
        };
        let rec: Recording = serde_json::from_slice(&bytes)
            .map_err(|e| GatewayError::BadResponse(format!("{}: {e}", path.display())))?;
        Ok(GenerationResult {
            text: rec.response.text,
            finish_reason: rec.response.finish_reason,
            usage: rec.response.usage,
            latency_ms: 0,
            backend_id: "replay".into(),
        })
    }

    fn id(&self) -> String {
        "replay".into()
    }
}

/// Forwards to an inner backend and stores every successful exchange in a
/// replay cache. Writes are serialized and atomic, so concurrent replay
/// readers never observe a partial file.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B, dir: PathBuf) -> Self {
        RecordingBackend { inner, dir, write_lock: Mutex::new(()) }
    }

    fn store(&self, request: &GenerationRequest, result: &GenerationResult) -> Result<(), GatewayError> {
        let rec = Recording {
            request: RecordedRequest {
                model: request.model.clone(),
                temperature: request.temperature,
                seed: request.seed,
                messages: request
                    .messages
                    .iter()
                    .map(|m| RecordedMessage { role: m.role.as_str().into(), content: m.content.clone() })
                    .collect(),
            },
            response: RecordedResponse {
                text: result.text.clone(),
                finish_reason: result.finish_reason,
                usage: result.usage,
            },
        };
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        write_atomic(&self.dir, &format!("{}.json", cache_key(request)), &rec)
    }
}

fn write_atomic(dir: &Path, name: &str, rec: &Recording) -> Result<(), GatewayError> {
    std::fs::create_dir_all(dir).map_err(|e| GatewayError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| GatewayError::io(dir, e))?;
    let mut text = serde_json::to_string_pretty(rec).map_err(|e| GatewayError::BadResponse(e.to_string()))?;
    text.push('\n');
    tmp.write_all(text.as_bytes()).map_err(|e| GatewayError::io(tmp.path(), e))?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| GatewayError::io(&target, e.error))?;
    Ok(())
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        let result = self.inner.generate(request)?;
        self.store(request, &result)?;
        Ok(result)
    }

    fn id(&self) -> String {
        format!("record:{}", self.inner.id())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockBackend;
    use crate::prompting::{ChatExchange, Role, Stage};

    fn request(content: &str, seed: Option<u64>) -> GenerationRequest {
        GenerationRequest {
            messages: vec![ChatExchange {
                role: Role::User,
                content: content.into(),
                stage: Stage::Plan,
                iteration: 0,
            }],
            model: "m".into(),
            temperature: 0.7,
            max_tokens: 64,
            seed,
            stop: vec![],
        }
    }

    #[test]
    fn key_depends_on_content_and_seed_only() {
        let a = request("hello", Some(1));
        let mut b = a.clone();
        b.max_tokens = 999;
        b.messages[0].stage = Stage::Generate;
        b.messages[0].iteration = 4;
        assert_eq!(cache_key(&a), cache_key(&b));
        assert_ne!(cache_key(&a), cache_key(&request("hello", Some(2))));
        assert_ne!(cache_key(&a), cache_key(&request("hello!", Some(1))));
        assert_eq!(cache_key(&a).len(), 64);
    }

    #[test]
    fn record_then_replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RecordingBackend::new(MockBackend::sequence(["first reply\nwith lines"]), dir.path().to_path_buf());
        let req = request("prompt", Some(42));
        let live = rec.generate(&req).unwrap();
        let replay = ReplayBackend::new(dir.path());
        assert_eq!(replay.generate(&req).unwrap().text, live.text);
        assert!(matches!(replay.generate(&request("other", Some(42))), Err(GatewayError::ReplayMiss { .. })));
    }

    #[test]
    fn recordings_hold_no_key_field() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RecordingBackend::new(MockBackend::sequence(["x"]), dir.path().to_path_buf());
        let req = request("prompt", None);
        rec.generate(&req).unwrap();
        let text = std::fs::read_to_string(ReplayBackend::new(dir.path()).path_for(&req)).unwrap();
        assert!(!text.contains(&cache_key(&req)));
        assert!(!text.to_lowercase().contains("authorization"));
    }
}
