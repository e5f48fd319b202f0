//! The orchestrating state machine: plan, generate, syntax loop, SMV loop,
//! verify loop, then accept or reject within fixed iteration budgets.

mod artifacts;
mod batch;
mod config;
mod engine;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use stforge_st::CheckReport;
use thiserror::Error;

pub use artifacts::{write_artifacts, RUN_FILE, TIMINGS_FILE, TRANSCRIPT_FILE};
pub use batch::{run_batch, write_batch_metrics, BatchOptions, BatchResult, BatchTask};
pub use config::{HumanGate, PipelineConfig, VerifierConfig, VerifierKind, DEFAULT_SEED};

use crate::checker::{BuiltinChecker, Checker};
use crate::gateway::{Gateway, GatewayError};
use crate::prompting::{PromptError, Stage, TemplateSet};
use crate::verifier::{Outcome, VerificationReport, Verifier, VerifierError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
    #[error("cannot write {path}: {reason}")]
    Io { path: String, reason: String },
}

impl PipelineError {
    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        PipelineError::Io { path: path.display().to_string(), reason: err.to_string() }
    }
}

/// What a run starts from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "text")]
pub enum PipelineInput {
    /// Natural-language specification; runs every stage.
    Spec(String),
    /// Broken code; enters the syntax loop directly.
    Fixing(String),
    /// Code prefix; one completion call, then the syntax loop.
    Completion(String),
}

impl PipelineInput {
    pub fn text(&self) -> &str {
        match self {
            PipelineInput::Spec(t) | PipelineInput::Fixing(t) | PipelineInput::Completion(t) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Accepted,
    RejectedSyntaxBudget,
    RejectedSmvBudget,
    RejectedVerificationBudget,
    AbortedByUser,
    BackendFailure,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Accepted => "accepted",
            RunStatus::RejectedSyntaxBudget => "rejected_syntax_budget",
            RunStatus::RejectedSmvBudget => "rejected_smv_budget",
            RunStatus::RejectedVerificationBudget => "rejected_verification_budget",
            RunStatus::AbortedByUser => "aborted_by_user",
            RunStatus::BackendFailure => "backend_failure",
        }
    }
}

/// History entry names: every prompt stage plus the tool and operator steps.
/// Serialized as a flat name such as `fix_syntax` or `check`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum StepKind {
    Llm(Stage),
    Check,
    Verify,
    HumanGate,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Llm(s) => s.as_str(),
            StepKind::Check => "check",
            StepKind::Verify => "verify",
            StepKind::HumanGate => "human_gate",
        }
    }
}

impl From<StepKind> for String {
    fn from(k: StepKind) -> String {
        k.as_str().to_string()
    }
}

impl TryFrom<String> for StepKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        match s.as_str() {
            "check" => Ok(StepKind::Check),
            "verify" => Ok(StepKind::Verify),
            "human_gate" => Ok(StepKind::HumanGate),
            other => other.parse().map(StepKind::Llm),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Verdict {
    Response {
        /// For code-producing stages: false when no fenced block was found
        /// and the raw reply was used.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        extracted: Option<bool>,
    },
    Check {
        report: CheckReport,
    },
    Verification {
        outcome: Outcome,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        failed_property: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Gate {
        checkpoint: Checkpoint,
        decision: String,
    },
    Failure {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Position in the history; strictly increasing.
    pub seq: usize,
    pub step: StepKind,
    /// For fix stages, the number of fix calls of that stage so far
    /// (1-based, never above the budget). For checks and verifications, the
    /// number of fixes of the corresponding kind that preceded them.
    pub iteration: u32,
    /// Replay cache key of the request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    /// SHA-256 of the response text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_hash: Option<String>,
    pub verdict: Verdict,
    /// Written to `timings.json` rather than `run.json`.
    #[serde(skip)]
    pub duration_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunArtifacts {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    /// Every candidate in order of appearance; the last one is final.
    pub candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smv: Option<String>,
    /// Latest verification, with `wall_time_ms` moved into the history.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationReport>,
}

impl RunArtifacts {
    pub fn final_code(&self) -> Option<&str> {
        self.candidates.last().map(String::as_str)
    }
}

/// One transcript line: a prompt message or the model's reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: usize,
    pub stage: Stage,
    pub iteration: u32,
    pub role: crate::prompting::Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub run_id: String,
    pub input: PipelineInput,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub history: Vec<StageRecord>,
    pub artifacts: RunArtifacts,
    /// Check of the final candidate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_check: Option<CheckReport>,
    /// Fix calls used per fix stage.
    pub fix_iterations: std::collections::BTreeMap<String, u32>,
    pub backend: String,
    pub verifier: Option<String>,
    pub config: serde_json::Value,
    #[serde(skip)]
    pub transcript: Vec<TranscriptEntry>,
}

impl PipelineRun {
    pub fn check_reports(&self) -> impl Iterator<Item = &CheckReport> {
        self.history.iter().filter_map(|r| match &r.verdict {
            Verdict::Check { report } => Some(report),
            _ => None,
        })
    }

    pub fn llm_calls(&self) -> impl Iterator<Item = &StageRecord> {
        self.history.iter().filter(|r| matches!(r.step, StepKind::Llm(_)))
    }

    pub fn is_accepted(&self) -> bool {
        self.status == RunStatus::Accepted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Checkpoint {
    Plan,
    Candidate,
    Smv,
    Verified,
}

impl Checkpoint {
    pub fn as_str(self) -> &'static str {
        match self {
            Checkpoint::Plan => "plan",
            Checkpoint::Candidate => "candidate",
            Checkpoint::Smv => "smv",
            Checkpoint::Verified => "verified",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GateDecision {
    Approve,
    /// Replaces the artifact under review.
    Edit(String),
    Abort,
}

/// Reviewer consulted at each checkpoint when the human gate is on.
pub trait Operator: Send + Sync {
    fn review(&self, checkpoint: Checkpoint, artifact: &str) -> GateDecision;
}

/// A configured pipeline. Cheap to share across threads; each run is
/// sequential.
pub struct Pipeline {
    pub config: PipelineConfig,
    gateway: Gateway,
    templates: Arc<TemplateSet>,
    checker: Arc<dyn Checker>,
    verifier: Option<Arc<dyn Verifier>>,
    operator: Option<Arc<dyn Operator>>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("backend", &self.gateway.backend_id())
            .field("checker", &self.checker.id())
            .field("verifier", &self.verifier.as_ref().map(|v| v.id()))
            .finish()
    }
}

impl Pipeline {
    /// Builds the gateway, verifier and templates named by `config`.
    pub fn from_config(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let gateway = Gateway::from_config(&config.backend)?;
        let verifier = config.verifier.build()?;
        Self::new(config, gateway, verifier)
    }

    /// Uses the given gateway and verifier; `verifier` must be `None` exactly
    /// when verification is disabled.
    pub fn new(
        config: PipelineConfig,
        gateway: Gateway,
        verifier: Option<Arc<dyn Verifier>>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        if verifier.is_some() != config.verifier.enabled {
            return Err(PipelineError::Config("verifier presence does not match verifier.enabled".into()));
        }
        let templates = match &config.templates_dir {
            Some(dir) => TemplateSet::load(dir)?,
            None => TemplateSet::builtin(),
        };
        Ok(Pipeline {
            config,
            gateway,
            templates: Arc::new(templates),
            checker: Arc::new(BuiltinChecker),
            verifier,
            operator: None,
        })
    }

    pub fn with_checker(mut self, checker: Arc<dyn Checker>) -> Self {
        self.checker = checker;
        self
    }

    pub fn with_operator(mut self, operator: Arc<dyn Operator>) -> Self {
        self.operator = Some(operator);
        self
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    /// Executes one run. Only unusable input is an error; backend and tool
    /// failures end the run with `backend_failure` and the partial history.
    pub fn run(&self, run_id: &str, input: &PipelineInput, seed: u64) -> Result<PipelineRun, PipelineError> {
        if input.text().trim().is_empty() {
            return Err(PipelineError::EmptyInput("pipeline input"));
        }
        if self.config.human_gate == HumanGate::ConfirmEachStage && self.operator.is_none() {
            return Err(PipelineError::Config("human gate is on but no operator is attached".into()));
        }
        Ok(engine::Run::new(self, run_id, input, seed).execute())
    }
}

/// Content-derived identifier of a single run.
pub fn run_id_for(input: &PipelineInput, config: &PipelineConfig, seed: u64) -> String {
    use sha2::{Digest, Sha256};
    let key = serde_json::json!({
        "input": input,
        "seed": seed,
        "shot_mode": config.shot_mode,
        "skip_plan": config.skip_plan,
        "model": config.backend.model,
    });
    let digest = Sha256::digest(key.to_string().as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("run-{hex}")
}

/// Runs one spec end to end with the configured backend and verifier and
/// writes its artifacts under `output_dir/<run id>/`.
pub fn run_pipeline(spec: &str, config: &PipelineConfig) -> Result<PipelineRun, PipelineError> {
    let pipeline = Pipeline::from_config(config.clone())?;
    let input = PipelineInput::Spec(spec.to_string());
    let id = run_id_for(&input, config, config.seed);
    let run = pipeline.run(&id, &input, config.seed)?;
    write_artifacts(&run, &config.output_dir.join(&run.run_id))?;
    Ok(run)
}

#[cfg(test)]
mod tests;
