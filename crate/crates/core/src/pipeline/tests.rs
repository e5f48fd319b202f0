use std::sync::{Arc, Mutex};

use super::*;
use crate::gateway::{BackendConfig, MockBackend};
use crate::verifier::StubVerifier;

const GOOD: &str = "PROGRAM Lamp\nVAR\n  on : BOOL;\nEND_VAR\non := TRUE;\nEND_PROGRAM";
const BROKEN: &str = "PROGRAM Lamp\nVAR\n  on : BOOL;\nEND_VAR\non := TRUE\nEND_PROGRAM";
const SMV: &str = "MODULE main\nVAR\n  on : boolean;\nASSIGN\n  init(on) := TRUE;\n  next(on) := TRUE;\n-- the lamp stays on\nINVARSPEC on\n";
const PROVEN: &str = "-- invariant on  is true\n";
const REFUTED: &str =
    "-- invariant on  is false\n-- as demonstrated by the following execution sequence\nTrace Type: Counterexample\n  -> State: 1.1 <-\n    on = FALSE\n";

fn fenced(code: &str) -> String {
    format!("Here is the program:\n```iecst\n{code}\n```\n")
}

fn config(verify: bool) -> PipelineConfig {
    let mut c = PipelineConfig::new(BackendConfig::mock("unused"));
    c.verifier.enabled = verify;
    c
}

fn script(entries: &[(Stage, String)]) -> Gateway {
    Gateway::new(MockBackend::new(entries.iter().map(|(s, t)| (Some(*s), t.clone())).collect()))
}

fn spec() -> PipelineInput {
    PipelineInput::Spec("Keep the lamp on at all times.".into())
}

#[test]
fn scripted_convergence_in_one_syntax_iteration() {
    let gw = script(&[
        (Stage::Plan, "States: ON only.".into()),
        (Stage::Generate, fenced(BROKEN)),
        (Stage::FixSyntax, fenced(GOOD)),
        (Stage::ToSmv, format!("```smv\n{SMV}```")),
    ]);
    let v: Arc<dyn Verifier> = Arc::new(StubVerifier::AlwaysProven);
    let p = Pipeline::new(config(true), gw, Some(v)).unwrap();
    let run = p.run("r", &spec(), 42).unwrap();
    assert_eq!(run.status, RunStatus::Accepted, "{:?}", run.error);
    assert_eq!(run.fix_iterations["fix_syntax"], 1);
    assert_eq!(run.artifacts.final_code(), Some(GOOD));
    assert_eq!(run.artifacts.plan.as_deref(), Some("States: ON only."));
    assert_eq!(run.artifacts.verification.as_ref().unwrap().overall, Outcome::Proven);
    let steps: Vec<&str> = run.history.iter().map(|r| r.step.as_str()).collect();
    assert_eq!(steps, ["plan", "generate", "check", "fix_syntax", "check", "to_smv", "verify"]);
    assert!(run.history.windows(2).all(|w| w[0].seq < w[1].seq));
}

#[test]
fn never_improving_backend_exhausts_the_syntax_budget() {
    let mut cfg = config(false);
    cfg.skip_plan = true;
    cfg.max_syntax_fix_iterations = 4;
    let entries: Vec<(Stage, String)> = std::iter::once((Stage::Generate, fenced(BROKEN)))
        .chain(std::iter::repeat((Stage::FixSyntax, fenced(BROKEN))).take(20))
        .collect();
    let p = Pipeline::new(cfg, script(&entries), None).unwrap();
    let run = p.run("r", &spec(), 42).unwrap();
    assert_eq!(run.status, RunStatus::RejectedSyntaxBudget);
    assert_eq!(run.check_reports().count(), 5);
    assert_eq!(run.llm_calls().filter(|r| r.step == StepKind::Llm(Stage::FixSyntax)).count(), 4);
}

#[test]
fn backend_failure_keeps_partial_history() {
    let gw = script(&[(Stage::Plan, "plan".into())]);
    let p = Pipeline::new(config(false), gw, None).unwrap();
    let run = p.run("r", &spec(), 42).unwrap();
    assert_eq!(run.status, RunStatus::BackendFailure);
    assert!(run.error.as_deref().unwrap().contains("generate"));
    assert_eq!(run.history.len(), 2);
    assert!(matches!(run.history[1].verdict, Verdict::Failure { .. }));
    assert!(run.final_check.is_none());
}

#[test]
fn refutation_feeds_back_and_regenerates_the_model() {
    let mut cfg = config(true);
    cfg.skip_plan = true;
    let gw = script(&[
        (Stage::Generate, fenced(GOOD)),
        (Stage::ToSmv, SMV.into()),
        (Stage::FixVerification, fenced(GOOD)),
        (Stage::ToSmv, SMV.into()),
    ]);
    let v: Arc<dyn Verifier> = Arc::new(StubVerifier::scripted([REFUTED.to_string(), PROVEN.to_string()]));
    let p = Pipeline::new(cfg, gw, Some(v)).unwrap();
    let run = p.run("r", &spec(), 42).unwrap();
    assert_eq!(run.status, RunStatus::Accepted, "{:?}", run.error);
    assert_eq!(run.fix_iterations["fix_verification"], 1);
    let steps: Vec<&str> = run.history.iter().map(|r| r.step.as_str()).collect();
    assert_eq!(steps, ["generate", "check", "to_smv", "verify", "fix_verification", "check", "to_smv", "verify"]);
    let fix_prompt =
        run.transcript.iter().find(|t| t.stage == Stage::FixVerification && t.role == crate::prompting::Role::User);
    let text = &fix_prompt.unwrap().content;
    assert!(text.contains("step 1: on = FALSE"), "{text}");
    assert!(text.contains("the lamp stays on"), "{text}");
}

#[test]
fn verification_budget_is_respected() {
    let mut cfg = config(true);
    cfg.skip_plan = true;
    cfg.max_verify_fix_iterations = 2;
    let mut entries = vec![(Stage::Generate, fenced(GOOD)), (Stage::ToSmv, SMV.to_string())];
    for _ in 0..5 {
        entries.push((Stage::FixVerification, fenced(GOOD)));
        entries.push((Stage::ToSmv, SMV.to_string()));
    }
    let v: Arc<dyn Verifier> = Arc::new(StubVerifier::scripted(vec![REFUTED.to_string(); 10]));
    let p = Pipeline::new(cfg, script(&entries), Some(v)).unwrap();
    let run = p.run("r", &spec(), 42).unwrap();
    assert_eq!(run.status, RunStatus::RejectedVerificationBudget);
    assert_eq!(run.fix_iterations["fix_verification"], 2);
}

#[test]
fn unparseable_models_exhaust_the_smv_budget() {
    let mut cfg = config(true);
    cfg.skip_plan = true;
    cfg.max_smv_fix_iterations = 3;
    let mut entries =
        vec![(Stage::Generate, fenced(GOOD)), (Stage::ToSmv, "MODULE main\nVAR x : boolean;\n".to_string())];
    entries.extend(std::iter::repeat((Stage::FixSmv, "MODULE main\n".to_string())).take(10));
    let v: Arc<dyn Verifier> = Arc::new(StubVerifier::AlwaysProven);
    let p = Pipeline::new(cfg, script(&entries), Some(v)).unwrap();
    let run = p.run("r", &spec(), 42).unwrap();
    assert_eq!(run.status, RunStatus::RejectedSmvBudget);
    assert_eq!(run.fix_iterations["fix_smv"], 3);
    assert!(run.history.iter().all(|r| r.step != StepKind::Llm(Stage::FixSmv) || r.iteration <= 3));
}

#[test]
fn fixing_input_skips_generation_and_verification() {
    let gw = script(&[(Stage::FixSyntax, fenced(GOOD))]);
    let p = Pipeline::new(config(false), gw, None).unwrap();
    let run = p.run("r", &PipelineInput::Fixing(BROKEN.into()), 42).unwrap();
    assert_eq!(run.status, RunStatus::Accepted);
    assert_eq!(run.artifacts.candidates, [BROKEN, GOOD]);
}

#[test]
fn completion_appends_to_the_prefix() {
    let prefix = "PROGRAM Lamp\nVAR\n  on : BOOL;\nEND_VAR\n";
    let gw = script(&[(Stage::Complete, "```\non := TRUE;\nEND_PROGRAM\n```".into())]);
    let p = Pipeline::new(config(false), gw, None).unwrap();
    let run = p.run("r", &PipelineInput::Completion(prefix.into()), 42).unwrap();
    assert_eq!(run.status, RunStatus::Accepted);
    assert_eq!(run.artifacts.final_code().unwrap(), format!("{prefix}on := TRUE;\nEND_PROGRAM"));
}

struct Scripted(Mutex<Vec<GateDecision>>, Mutex<Vec<Checkpoint>>);

impl Operator for Scripted {
    fn review(&self, checkpoint: Checkpoint, _artifact: &str) -> GateDecision {
        self.1.lock().unwrap().push(checkpoint);
        let mut q = self.0.lock().unwrap();
        if q.is_empty() {
            GateDecision::Approve
        } else {
            q.remove(0)
        }
    }
}

#[test]
fn operator_can_edit_and_abort() {
    let mut cfg = config(false);
    cfg.human_gate = HumanGate::ConfirmEachStage;
    let gw = script(&[(Stage::Plan, "plan".into()), (Stage::Generate, fenced(BROKEN))]);
    let op = Arc::new(Scripted(
        Mutex::new(vec![GateDecision::Approve, GateDecision::Edit(GOOD.into()), GateDecision::Approve]),
        Mutex::new(Vec::new()),
    ));
    let p = Pipeline::new(cfg.clone(), gw, None).unwrap().with_operator(op.clone());
    let run = p.run("r", &spec(), 42).unwrap();
    assert_eq!(run.status, RunStatus::Accepted);
    assert_eq!(run.fix_iterations["fix_syntax"], 0);
    assert_eq!(*op.1.lock().unwrap(), [Checkpoint::Plan, Checkpoint::Candidate, Checkpoint::Verified]);

    let gw = script(&[(Stage::Plan, "plan".into())]);
    let op = Arc::new(Scripted(Mutex::new(vec![GateDecision::Abort]), Mutex::new(Vec::new())));
    let p = Pipeline::new(cfg, gw, None).unwrap().with_operator(op);
    let run = p.run("r", &spec(), 42).unwrap();
    assert_eq!(run.status, RunStatus::AbortedByUser);
    assert!(run.artifacts.candidates.is_empty());
}

#[test]
fn gate_without_operator_is_a_configuration_error() {
    let mut cfg = config(false);
    cfg.human_gate = HumanGate::ConfirmEachStage;
    let p = Pipeline::new(cfg, script(&[]), None).unwrap();
    assert!(matches!(p.run("r", &spec(), 42), Err(PipelineError::Config(_))));
}

#[test]
fn identical_runs_write_identical_records() {
    let make = || {
        let gw = script(&[(Stage::Plan, "p".into()), (Stage::Generate, fenced(GOOD))]);
        Pipeline::new(config(false), gw, None).unwrap().run("r", &spec(), 42).unwrap()
    };
    let (a, b) = (make(), make());
    let dir = tempfile::tempdir().unwrap();
    write_artifacts(&a, &dir.path().join("a")).unwrap();
    write_artifacts(&b, &dir.path().join("b")).unwrap();
    for f in ["run.json", "final.st", "plan.md", "candidate_1.st", "transcript.jsonl"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let record: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/run.json")).unwrap()).unwrap();
    assert_eq!(record["status"], "accepted");
    assert_eq!(record["history"][0]["step"], "plan");
    assert!(record["config"].get("output_dir").is_none());
}

#[test]
fn step_kind_round_trips() {
    for k in [StepKind::Llm(Stage::FixSmv), StepKind::Check, StepKind::Verify, StepKind::HumanGate] {
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(serde_json::from_str::<StepKind>(&s).unwrap(), k);
    }
}
