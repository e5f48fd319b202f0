use std::path::Path;
use std::sync::Mutex;

use super::{Backend, FinishReason, GatewayError, GenerationRequest, GenerationResult, Usage};
use crate::prompting::Stage;

/// Scripted responses, consumed in order.
///
/// A script directory holds files named `NNN.txt` or `NNN-<stage>.txt`,
/// sorted by name. A request receives the first unconsumed entry whose stage
/// tag matches its own; untagged entries match any stage.
#[derive(Debug)]
pub struct MockBackend {
    entries: Vec<(Option<Stage>, String)>,
    consumed: Mutex<Vec<bool>>,
}

impl MockBackend {
    pub fn new(entries: Vec<(Option<Stage>, String)>) -> Self {
        let consumed = Mutex::new(vec![false; entries.len()]);
        MockBackend { entries, consumed }
    }

    /// Untagged responses answered strictly in order.
    pub fn sequence<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(responses.into_iter().map(|r| (None, r.into())).collect())
    }

    pub fn load(dir: &Path) -> Result<Self, GatewayError> {
        let read_dir = std::fs::read_dir(dir).map_err(|e| GatewayError::io(dir, e))?;
        let mut files = Vec::new();
        for entry in read_dir {
            let path = entry.map_err(|e| GatewayError::io(dir, e))?.path();
            if path.extension().is_some_and(|e| e == "txt") {
                files.push(path);
            }
        }
        files.sort();
        let mut entries = Vec::with_capacity(files.len());
        for path in files {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let stage = match stem.split_once('-') {
                Some((_, tag)) => Some(
                    tag.parse::<Stage>()
                        .map_err(|e| GatewayError::Config(format!("mock script file {}: {e}", path.display())))?,
                ),
                None => None,
            };
            let text = std::fs::read_to_string(&path).map_err(|e| GatewayError::io(&path, e))?;
            entries.push((stage, text));
        }
        if entries.is_empty() {
            return Err(GatewayError::Config(format!("mock script directory {} holds no .txt files", dir.display())));
        }
        Ok(Self::new(entries))
    }

    pub fn remaining(&self) -> usize {
        self.consumed.lock().unwrap_or_else(|e| e.into_inner()).iter().filter(|c| !**c).count()
    }
}

impl Backend for MockBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        let stage = request.stage();
        let mut consumed = self.consumed.lock().unwrap_or_else(|e| e.into_inner());
        let idx = self
            .entries
            .iter()
            .enumerate()
            .position(|(i, (tag, _))| !consumed[i] && (tag.is_none() || *tag == stage))
            .ok_or_else(|| GatewayError::ScriptExhausted {
                stage: stage.map(|s| s.to_string()).unwrap_or_else(|| "<none>".into()),
            })?;
        consumed[idx] = true;
        Ok(result(self.entries[idx].1.clone(), "mock"))
    }

    fn id(&self) -> String {
        "mock".into()
    }
}

type Responder = dyn Fn(&GenerationRequest) -> Result<String, GatewayError> + Send + Sync;

/// Answers every request with a closure; used for behavioural test doubles.
pub struct FnBackend {
    id: String,
    respond: Box<Responder>,
}

impl FnBackend {
    pub fn new<F>(id: &str, respond: F) -> Self
    where
        F: Fn(&GenerationRequest) -> Result<String, GatewayError> + Send + Sync + 'static,
    {
        FnBackend { id: id.to_string(), respond: Box::new(respond) }
    }
}

impl Backend for FnBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        (self.respond)(request).map(|text| result(text, &self.id))
    }

    fn id(&self) -> String {
        self.id.clone()
    }
}

fn result(text: String, backend_id: &str) -> GenerationResult {
    GenerationResult {
        text,
        finish_reason: FinishReason::Stop,
        usage: Usage::default(),
        latency_ms: 0,
        backend_id: backend_id.to_string(),
    }
}
