use std::time::{Duration, Instant};

use log::{debug, warn};
use serde_json::{json, Value};

use super::{Backend, BackendConfig, FinishReason, GatewayError, GenerationRequest, GenerationResult, Usage};

/// Longest single backoff pause.
const MAX_BACKOFF: Duration = Duration::from_secs(30);

/// Chat-completion client speaking the OpenAI-compatible wire format.
#[derive(Debug)]
pub struct RemoteBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key_env: Option<String>,
    max_retries: u32,
    backoff_base: Duration,
}

enum Attempt {
    Done(GenerationResult),
    Transient(String),
    Fatal(GatewayError),
}

impl RemoteBackend {
    pub fn new(config: &BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(RemoteBackend {
            client,
            endpoint: config.endpoint.clone().unwrap_or_default(),
            model: config.model.clone(),
            api_key_env: config.api_key_env.clone(),
            max_retries: config.max_retries,
            backoff_base: Duration::from_millis(config.backoff_base_ms),
        })
    }

    fn api_key(&self) -> Result<Option<String>, GatewayError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| GatewayError::Config(format!("environment variable {var} is not set"))),
        }
    }

    fn body(&self, request: &GenerationRequest) -> Value {
        let model = if request.model.is_empty() { &self.model } else { &request.model };
        let mut body = json!({
            "model": model,
            "messages": request
                .messages
                .iter()
                .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
                .collect::<Vec<_>>(),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        if !request.stop.is_empty() {
            body["stop"] = json!(request.stop);
        }
        body
    }

    fn attempt(&self, body: &Value, key: Option<&str>) -> Attempt {
        let started = Instant::now();
        let mut builder = self.client.post(&self.endpoint).json(body);
        if let Some(k) = key {
            builder = builder.bearer_auth(k);
        }
        let response = match builder.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(describe(&e)),
        };
        let status = response.status().as_u16();
        if status == 401 || status == 403 {
            return Attempt::Fatal(GatewayError::AuthFailure { status });
        }
        if status == 429 || status >= 500 {
            return Attempt::Transient(format!("HTTP {status}"));
        }
        if !(200..300).contains(&status) {
            let text = response.text().unwrap_or_default();
            return Attempt::Fatal(GatewayError::BadResponse(format!("HTTP {status}: {}", snippet(&text))));
        }
        let value: Value = match response.json() {
            Ok(v) => v,
            Err(e) if e.is_timeout() => return Attempt::Transient(describe(&e)),
            Err(e) => return Attempt::Fatal(GatewayError::BadResponse(e.to_string())),
        };
        match parse_completion(&value) {
            Ok((text, finish_reason, usage)) => Attempt::Done(GenerationResult {
                text,
                finish_reason,
                usage,
                latency_ms: started.elapsed().as_millis() as u64,
                backend_id: format!("remote:{}", self.model),
            }),
            Err(e) => Attempt::Fatal(e),
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.backoff_base.saturating_mul(1u32 << attempt.min(16)).min(MAX_BACKOFF)
    }
}

fn describe(e: &reqwest::Error) -> String {
    if e.is_timeout() {
        format!("timeout: {e}")
    } else if e.is_connect() {
        format!("connection failed: {e}")
    } else {
        e.to_string()
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}

/// Reads `choices[0].message.content`, the finish reason and token usage.
pub(crate) fn parse_completion(value: &Value) -> Result<(String, FinishReason, Usage), GatewayError> {
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| GatewayError::BadResponse("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::BadResponse("choice has no message content".into()))?
        .to_string();
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("length") => FinishReason::Length,
        Some("stop") | None => FinishReason::Stop,
        Some(_) => FinishReason::Error,
    };
    let count = |field: &str| value.pointer(&format!("/usage/{field}")).and_then(Value::as_u64).unwrap_or(0) as u32;
    let usage = Usage { prompt_tokens: count("prompt_tokens"), completion_tokens: count("completion_tokens") };
    Ok((text, finish_reason, usage))
}

impl Backend for RemoteBackend {
    /// At most `1 + max_retries` HTTP attempts. Authentication failures are
    /// never retried.
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        let key = self.api_key()?;
        let body = self.body(request);
        let attempts = 1 + self.max_retries;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let pause = self.backoff(attempt - 1);
                debug!("retrying chat completion in {} ms", pause.as_millis());
                std::thread::sleep(pause);
            }
            match self.attempt(&body, key.as_deref()) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Transient(msg) => {
                    warn!("chat completion attempt {}/{attempts} failed: {msg}", attempt + 1);
                    last_error = msg;
                }
            }
        }
        Err(GatewayError::NetworkExhausted { attempts, last_error })
    }

    fn id(&self) -> String {
        format!("remote:{}", self.model)
    }
}
