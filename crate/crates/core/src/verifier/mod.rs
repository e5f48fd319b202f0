//! nuXmv integration: SMV documents, subprocess execution, output
//! classification and counterexample rendering.

mod output;
mod process;
mod smv;

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use output::{parse_nuxmv_output, parse_nuxmv_output_for};
pub use process::{run_nuxmv, Engine, NuxmvConfig, NUXMV_ENV};
pub use smv::{PropertyKind, SmvDocument, SmvProperty};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Proven,
    Refuted,
    ToolError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceState {
    pub step: u32,
    /// Full assignment after delta expansion, in first-seen order.
    pub assignments: IndexMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Steps strictly increasing from 1.
    pub states: Vec<TraceState>,
    /// Step at which the lasso loop begins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_start: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyVerdict {
    /// Property as printed by the checker.
    pub text: String,
    /// `specification` or `invariant`.
    pub kind: String,
    /// Index into the document's property list, once reconciled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property_index: Option<usize>,
    pub holds: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Trace>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub overall: Outcome,
    pub verdicts: Vec<PropertyVerdict>,
    /// Index into `verdicts` of the property whose counterexample is fed back.
    /// Set exactly when `overall` is `refuted`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_property: Option<usize>,
    pub raw_output: String,
    pub wall_time_ms: u64,
    /// Checker error lines or the reason for a `tool_error` classification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl VerificationReport {
    pub fn counterexample(&self) -> Option<(&PropertyVerdict, &Trace)> {
        let v = &self.verdicts[self.failed_property?];
        v.trace.as_ref().map(|t| (v, t))
    }

    /// Human-readable outcome, as written to `verification.txt`.
    pub fn summary(&self) -> String {
        let mut out = format!("outcome: {}\n", serde_json::to_value(self.overall).unwrap().as_str().unwrap_or(""));
        for v in &self.verdicts {
            out.push_str(&format!("{} {} is {}\n", v.kind, v.text, v.holds));
        }
        if let Some(e) = &self.error {
            out.push_str(&format!("error: {e}\n"));
        }
        out
    }

    pub(crate) fn tool_error(raw: String, error: String) -> Self {
        VerificationReport {
            overall: Outcome::ToolError,
            verdicts: Vec::new(),
            failed_property: None,
            raw_output: raw,
            wall_time_ms: 0,
            error: Some(error),
        }
    }
}

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("model checker binary not found: {0}")]
    BinaryNotFound(String),
    #[error("invalid SMV model: {0}")]
    InvalidModel(String),
    #[error("scripted verifier has no output left")]
    ScriptExhausted,
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl VerifierError {
    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        VerifierError::Io { path: path.display().to_string(), reason: err.to_string() }
    }
}

pub trait Verifier: Send + Sync {
    fn verify(&self, doc: &SmvDocument) -> Result<VerificationReport, VerifierError>;
    fn id(&self) -> String;
}

#[derive(Debug, Clone)]
pub struct NuxmvVerifier {
    pub config: NuxmvConfig,
}

impl Verifier for NuxmvVerifier {
    fn verify(&self, doc: &SmvDocument) -> Result<VerificationReport, VerifierError> {
        run_nuxmv(doc, &self.config)
    }

    fn id(&self) -> String {
        "nuxmv".into()
    }
}

/// Stand-in for machines without nuXmv. Never the default.
#[derive(Debug)]
pub enum StubVerifier {
    /// Every declared property is reported true.
    AlwaysProven,
    /// Raw checker outputs, classified against the document in order.
    Scripted(Mutex<std::collections::VecDeque<String>>),
}

impl StubVerifier {
    pub fn scripted<I: IntoIterator<Item = String>>(outputs: I) -> Self {
        StubVerifier::Scripted(Mutex::new(outputs.into_iter().collect()))
    }

    /// Loads every file of `dir` in name order as one scripted output.
    pub fn load(dir: &Path) -> Result<Self, VerifierError> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| VerifierError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let outputs = files
            .iter()
            .map(|p| std::fs::read_to_string(p).map_err(|e| VerifierError::io(p, e)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::scripted(outputs))
    }
}

impl Verifier for StubVerifier {
    fn verify(&self, doc: &SmvDocument) -> Result<VerificationReport, VerifierError> {
        match self {
            StubVerifier::AlwaysProven => {
                let raw: String = doc
                    .properties
                    .iter()
                    .map(|p| match p.kind {
                        PropertyKind::Invar => format!("-- invariant {}  is true\n", p.text),
                        _ => format!("-- specification {}  is true\n", p.text),
                    })
                    .collect();
                // Reorder into the checker's reporting order.
                let mut ordered: Vec<&str> = raw.lines().collect();
                let rank = |i: usize| match doc.properties[i].kind {
                    PropertyKind::Ctl => 0,
                    PropertyKind::Ltl => 1,
                    PropertyKind::Invar => 2,
                };
                let mut idx: Vec<usize> = (0..ordered.len()).collect();
                idx.sort_by_key(|&i| rank(i));
                ordered = idx.iter().map(|&i| ordered[i]).collect();
                let raw = ordered.join("\n") + "\n";
                Ok(parse_nuxmv_output_for(&raw, doc))
            }
            StubVerifier::Scripted(queue) => {
                let raw = queue
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .pop_front()
                    .ok_or(VerifierError::ScriptExhausted)?;
                Ok(parse_nuxmv_output_for(&raw, doc))
            }
        }
    }

    fn id(&self) -> String {
        match self {
            StubVerifier::AlwaysProven => "stub:always_proven".into(),
            StubVerifier::Scripted(_) => "stub:scripted".into(),
        }
    }
}

/// One line per step. Step 1 lists every variable; later steps list only
/// changed variables. Output is capped at `max_steps` lines plus an elision
/// marker.
pub fn summarize_counterexample(trace: &Trace, max_steps: usize) -> String {
    let mut lines = Vec::new();
    let mut prev: Option<&IndexMap<String, String>> = None;
    for state in trace.states.iter().take(max_steps) {
        let changed: Vec<String> = state
            .assignments
            .iter()
            .filter(|(k, v)| prev.map_or(true, |p| p.get(*k) != Some(*v)))
            .map(|(k, v)| format!("{k} = {v}"))
            .collect();
        let body = if changed.is_empty() { "(no change)".to_string() } else { changed.join(", ") };
        let label = if trace.loop_start == Some(state.step) {
            format!("step {} (loop starts here)", state.step)
        } else {
            format!("step {}", state.step)
        };
        lines.push(format!("{label}: {body}"));
        prev = Some(&state.assignments);
    }
    if trace.states.len() > max_steps {
        lines.push(format!("... {} more steps omitted", trace.states.len() - max_steps));
    }
    lines.join("\n")
}
