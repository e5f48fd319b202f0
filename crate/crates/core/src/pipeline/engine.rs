use std::collections::BTreeMap;
use std::time::Instant;

use sha2::{Digest, Sha256};
use stforge_st::CheckReport;

use super::{
    Checkpoint, GateDecision, HumanGate, Pipeline, PipelineInput, PipelineRun, RunArtifacts, RunStatus, StageRecord,
    StepKind, TranscriptEntry, Verdict,
};
use crate::gateway::{cache_key, extract_code_block, GenerationRequest};
use crate::prompting::{ChatExchange, PromptError, Role, Stage};
use crate::verifier::{summarize_counterexample, Outcome, SmvDocument, VerificationReport, VerifierError};

/// Why a run stopped early.
enum Stop {
    Status(RunStatus),
    Failure(String),
}

impl From<PromptError> for Stop {
    fn from(e: PromptError) -> Self {
        Stop::Failure(format!("prompt: {e}"))
    }
}

type Step<T> = Result<T, Stop>;

pub(super) struct Run<'p> {
    p: &'p Pipeline,
    run_id: String,
    input: PipelineInput,
    seed: u64,
    history: Vec<StageRecord>,
    transcript: Vec<TranscriptEntry>,
    artifacts: RunArtifacts,
    final_check: Option<CheckReport>,
    /// Fix calls made so far, per fix stage.
    fixes: BTreeMap<Stage, u32>,
    smv_translations: u32,
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl<'p> Run<'p> {
    pub(super) fn new(p: &'p Pipeline, run_id: &str, input: &PipelineInput, seed: u64) -> Self {
        Run {
            p,
            run_id: run_id.to_string(),
            input: input.clone(),
            seed,
            history: Vec::new(),
            transcript: Vec::new(),
            artifacts: RunArtifacts::default(),
            final_check: None,
            fixes: BTreeMap::new(),
            smv_translations: 0,
        }
    }

    pub(super) fn execute(mut self) -> PipelineRun {
        let (status, error) = match self.drive() {
            Ok(()) => (RunStatus::Accepted, None),
            Err(Stop::Status(s)) => (s, None),
            Err(Stop::Failure(e)) => {
                log::warn!("run {} failed: {e}", self.run_id);
                (RunStatus::BackendFailure, Some(e))
            }
        };
        let fix_iterations = [Stage::FixSyntax, Stage::FixSmv, Stage::FixVerification]
            .into_iter()
            .map(|s| (s.as_str().to_string(), self.fixes.get(&s).copied().unwrap_or(0)))
            .collect();
        PipelineRun {
            run_id: self.run_id,
            input: self.input,
            seed: self.seed,
            status,
            error,
            history: self.history,
            artifacts: self.artifacts,
            final_check: self.final_check,
            fix_iterations,
            backend: self.p.gateway.backend_id(),
            verifier: self.p.verifier.as_ref().map(|v| v.id()),
            config: self.p.config.echo(),
            transcript: self.transcript,
        }
    }

    fn drive(&mut self) -> Step<()> {
        let input = self.input.clone();
        let verify = match &input {
            PipelineInput::Spec(spec) => {
                let plan = if self.p.config.skip_plan { String::new() } else { self.plan(spec)? };
                let messages = self.p.templates.render_generation_prompt(spec, &plan, self.p.config.shot_mode)?;
                let code = self.call_for_code(Stage::Generate, 1, messages)?;
                self.push_candidate(code);
                true
            }
            PipelineInput::Fixing(code) => {
                self.push_candidate(code.clone());
                false
            }
            PipelineInput::Completion(prefix) => {
                let messages = self.p.templates.render_completion_prompt(prefix)?;
                let rest = self.call_for_code(Stage::Complete, 1, messages)?;
                // Models sometimes repeat the prefix before continuing it.
                let code = if rest.starts_with(prefix.trim_end()) { rest } else { format!("{prefix}{rest}") };
                self.push_candidate(code);
                false
            }
        };
        // Without natural-language requirements there is nothing to model check.
        let spec = match (&input, self.p.verifier.is_some() && verify) {
            (PipelineInput::Spec(s), true) => Some(s.clone()),
            _ => None,
        };
        self.gate_candidate(Checkpoint::Candidate)?;
        loop {
            self.syntax_loop()?;
            let Some(spec) = &spec else {
                if self.gate_candidate(Checkpoint::Verified)? {
                    return Ok(());
                }
                continue;
            };
            let report = self.smv_loop(spec)?;
            match report.overall {
                Outcome::Proven => {
                    if self.gate_candidate(Checkpoint::Verified)? {
                        return Ok(());
                    }
                }
                _ => self.verification_fix(&report)?,
            }
        }
    }

    fn plan(&mut self, spec: &str) -> Step<String> {
        let messages = self.p.templates.render_plan_prompt(spec)?;
        let text = self.call(Stage::Plan, 1, messages, self.p.config.generation_temperature)?;
        let mut plan = text.trim().to_string();
        if let Some(edited) = self.gate(Checkpoint::Plan, &plan)? {
            plan = edited;
        }
        self.artifacts.plan = Some(plan.clone());
        Ok(plan)
    }

    fn current(&self) -> String {
        self.artifacts.candidates.last().cloned().unwrap_or_default()
    }

    fn push_candidate(&mut self, code: String) {
        self.artifacts.candidates.push(code);
    }

    /// Reviews the current candidate; an edit becomes a new candidate.
    /// Returns false when the candidate changed.
    fn gate_candidate(&mut self, checkpoint: Checkpoint) -> Step<bool> {
        let code = self.current();
        match self.gate(checkpoint, &code)? {
            Some(edited) if edited != code => {
                self.push_candidate(edited);
                Ok(false)
            }
            _ => Ok(true),
        }
    }

    /// Checks the current candidate and requests one-error fixes until it
    /// passes or the syntax budget is spent.
    fn syntax_loop(&mut self) -> Step<()> {
        loop {
            let code = self.current();
            let started = Instant::now();
            let report =
                self.p.checker.check(&self.run_id, &code).map_err(|e| Stop::Failure(format!("checker: {e}")))?;
            let used = self.used(Stage::FixSyntax);
            self.record(StepKind::Check, used, None, None, Verdict::Check { report: report.clone() }, started);
            self.final_check = Some(report.clone());
            if report.pass {
                return Ok(());
            }
            if used >= self.p.config.max_syntax_fix_iterations {
                return Err(Stop::Status(RunStatus::RejectedSyntaxBudget));
            }
            let iteration = self.bump(Stage::FixSyntax);
            let messages = self.p.templates.render_fix_prompt_for(&code, &report)?;
            let fixed = self.call_for_code(Stage::FixSyntax, iteration, messages)?;
            self.push_candidate(fixed);
        }
    }

    /// Translates the current candidate and repairs the model until the
    /// checker returns a verdict. Timeouts are fed back like tool errors.
    fn smv_loop(&mut self, spec: &str) -> Step<VerificationReport> {
        self.smv_translations += 1;
        let messages = self.p.templates.render_smv_prompt(spec, &self.current())?;
        let mut smv = self.call_for_code(Stage::ToSmv, self.smv_translations, messages)?;
        loop {
            if let Some(edited) = self.gate(Checkpoint::Smv, &smv)? {
                smv = edited;
            }
            self.artifacts.smv = Some(smv.clone());
            let report = self.verify(&smv)?;
            match report.overall {
                Outcome::Proven | Outcome::Refuted => return Ok(report),
                Outcome::ToolError | Outcome::Timeout => {
                    if self.used(Stage::FixSmv) >= self.p.config.max_smv_fix_iterations {
                        return Err(Stop::Status(RunStatus::RejectedSmvBudget));
                    }
                    let feedback = match report.overall {
                        Outcome::Timeout => format!(
                            "model checking did not finish within {} s; reduce the state space",
                            self.p.config.verifier.timeout_secs
                        ),
                        _ => {
                            report.error.clone().filter(|e| !e.is_empty()).unwrap_or_else(|| report.raw_output.clone())
                        }
                    };
                    let iteration = self.bump(Stage::FixSmv);
                    let messages = self.p.templates.render_smv_fix_prompt(&smv, &feedback)?;
                    smv = self.call_for_code(Stage::FixSmv, iteration, messages)?;
                }
            }
        }
    }

    fn verify(&mut self, smv: &str) -> Step<VerificationReport> {
        let started = Instant::now();
        let verifier = self.p.verifier.as_ref().expect("verification requires a verifier");
        let result = SmvDocument::parse(smv)
            .map_err(|e| VerifierError::InvalidModel(e.to_string()))
            .and_then(|doc| verifier.verify(&doc));
        let mut report = match result {
            Ok(r) => r,
            Err(VerifierError::InvalidModel(e)) => VerificationReport::tool_error(String::new(), e),
            Err(e) => {
                let iteration = self.used(Stage::FixVerification);
                let error = format!("verifier: {e}");
                self.record(
                    StepKind::Verify,
                    iteration,
                    None,
                    None,
                    Verdict::Failure { error: error.clone() },
                    started,
                );
                return Err(Stop::Failure(error));
            }
        };
        let failed_property = report.counterexample().map(|(v, _)| v.text.clone());
        let verdict = Verdict::Verification { outcome: report.overall, failed_property, error: report.error.clone() };
        let iteration = self.used(Stage::FixVerification);
        self.record(StepKind::Verify, iteration, None, None, verdict, started);
        if let Some(last) = self.history.last_mut() {
            last.duration_ms = last.duration_ms.max(report.wall_time_ms);
        }
        report.wall_time_ms = 0;
        self.artifacts.verification = Some(report.clone());
        Ok(report)
    }

    fn verification_fix(&mut self, report: &VerificationReport) -> Step<()> {
        if self.used(Stage::FixVerification) >= self.p.config.max_verify_fix_iterations {
            return Err(Stop::Status(RunStatus::RejectedVerificationBudget));
        }
        let (property, counterexample) = match report.counterexample() {
            Some((v, trace)) => {
                (v.text.clone(), summarize_counterexample(trace, self.p.config.counterexample_max_steps))
            }
            // A refutation the operator rejected at the final gate lands here too.
            None => ("the stated requirements".to_string(), "no counterexample available".to_string()),
        };
        let property = self.describe_property(report, property);
        let iteration = self.bump(Stage::FixVerification);
        let messages = self.p.templates.render_verification_fix_prompt(&self.current(), &property, &counterexample)?;
        let code = self.call_for_code(Stage::FixVerification, iteration, messages)?;
        self.push_candidate(code);
        Ok(())
    }

    /// Prefers the property's declaration, with its source sentence, over the
    /// checker's echo.
    fn describe_property(&self, report: &VerificationReport, fallback: String) -> String {
        let idx = report.failed_property.and_then(|i| report.verdicts[i].property_index);
        let doc = self.artifacts.smv.as_deref().and_then(|s| SmvDocument::parse(s).ok());
        match (idx, doc) {
            (Some(i), Some(doc)) if i < doc.properties.len() => doc.properties[i].describe(),
            _ => fallback,
        }
    }

    /// Asks the operator when the gate is on. `Some` carries an edit.
    fn gate(&mut self, checkpoint: Checkpoint, artifact: &str) -> Step<Option<String>> {
        if self.p.config.human_gate == HumanGate::Off {
            return Ok(None);
        }
        let Some(op) = self.p.operator.clone() else { return Ok(None) };
        let started = Instant::now();
        let decision = op.review(checkpoint, artifact);
        let (label, out) = match decision {
            GateDecision::Approve => ("approve", Ok(None)),
            GateDecision::Edit(text) => ("edit", Ok(Some(text))),
            GateDecision::Abort => ("abort", Err(Stop::Status(RunStatus::AbortedByUser))),
        };
        self.record(StepKind::HumanGate, 0, None, None, Verdict::Gate { checkpoint, decision: label.into() }, started);
        out
    }

    fn used(&self, stage: Stage) -> u32 {
        self.fixes.get(&stage).copied().unwrap_or(0)
    }

    fn bump(&mut self, stage: Stage) -> u32 {
        let n = self.fixes.entry(stage).or_insert(0);
        *n += 1;
        *n
    }

    fn temperature(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Plan | Stage::Generate | Stage::Complete => self.p.config.generation_temperature,
            Stage::FixSyntax | Stage::ToSmv | Stage::FixSmv | Stage::FixVerification => self.p.config.fix_temperature,
        }
    }

    /// Calls the model and extracts the first code block, falling back to the
    /// raw reply so a chatty answer still reaches the checker.
    fn call_for_code(&mut self, stage: Stage, iteration: u32, messages: Vec<ChatExchange>) -> Step<String> {
        let text = self.call(stage, iteration, messages, self.temperature(stage))?;
        let (code, extracted) = match extract_code_block(&text) {
            Ok(c) => (c, true),
            Err(_) => (text.trim().to_string(), false),
        };
        if let Some(Verdict::Response { extracted: e }) = self.history.last_mut().map(|r| &mut r.verdict) {
            *e = Some(extracted);
        }
        Ok(code)
    }

    fn call(&mut self, stage: Stage, iteration: u32, messages: Vec<ChatExchange>, temperature: f64) -> Step<String> {
        let messages = crate::prompting::with_iteration(messages, iteration);
        let request = GenerationRequest {
            messages,
            model: self.p.config.backend.model.clone(),
            temperature,
            max_tokens: self.p.config.max_tokens,
            seed: Some(self.seed),
            stop: Vec::new(),
        };
        let key = cache_key(&request);
        let seq = self.history.len();
        for m in &request.messages {
            self.transcript.push(TranscriptEntry { seq, stage, iteration, role: m.role, content: m.content.clone() });
        }
        let started = Instant::now();
        match self.p.gateway.generate(&request) {
            Ok(result) => {
                let verdict = Verdict::Response { extracted: None };
                self.record(
                    StepKind::Llm(stage),
                    iteration,
                    Some(key),
                    Some(sha256_hex(&result.text)),
                    verdict,
                    started,
                );
                self.transcript.push(TranscriptEntry {
                    seq,
                    stage,
                    iteration,
                    role: Role::Assistant,
                    content: result.text.clone(),
                });
                Ok(result.text)
            }
            Err(e) => {
                let error = format!("{stage}: {e}");
                self.record(
                    StepKind::Llm(stage),
                    iteration,
                    Some(key),
                    None,
                    Verdict::Failure { error: error.clone() },
                    started,
                );
                Err(Stop::Failure(error))
            }
        }
    }

    fn record(
        &mut self,
        step: StepKind,
        iteration: u32,
        prompt_hash: Option<String>,
        response_hash: Option<String>,
        verdict: Verdict,
        started: Instant,
    ) {
        self.history.push(StageRecord {
            seq: self.history.len(),
            step,
            iteration,
            prompt_hash,
            response_hash,
            verdict,
            duration_ms: started.elapsed().as_millis() as u64,
        });
    }
}
