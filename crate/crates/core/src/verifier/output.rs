use std::sync::OnceLock;

use indexmap::IndexMap;
use regex::Regex;

use super::smv::{collapse, PropertyKind, SmvDocument};
use super::{Outcome, PropertyVerdict, Trace, TraceState, VerificationReport};

fn verdict_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^-- (specification|invariant)\s+(.*?)\s+is (true|false)\s*$").unwrap())
}

fn state_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^->\s*(State|Input):\s*(\d+)\.(\d+)\s*<-$").unwrap())
}

fn error_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)(syntax error|undefined|not defined|type error|illegal|cannot open|no such file|aborting batch mode|^file .*: line \d+|^error\b|\berror:)",
        )
        .unwrap()
    })
}

fn inconclusive_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^-- (no counterexample found|cannot prove)").unwrap())
}

/// Classifies captured nuXmv output on its own.
///
/// `proven` requires at least one verdict, every verdict true and no error
/// line. A false verdict without a parsable trace, error lines, inconclusive
/// bounded results or an unrecognised layout all yield `tool_error`.
pub fn parse_nuxmv_output(raw: &str) -> VerificationReport {
    let mut verdicts: Vec<PropertyVerdict> = Vec::new();
    let mut errors: Vec<String> = Vec::new();
    let mut inconclusive: Vec<String> = Vec::new();
    let lines: Vec<&str> = raw.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i].trim();
        if let Some(c) = verdict_re().captures(line) {
            let kind = if &c[1] == "invariant" { VerdictKind::Invariant } else { VerdictKind::Specification };
            let holds = &c[3] == "true";
            i += 1;
            let trace = if holds { None } else { parse_trace(&lines, &mut i) };
            verdicts.push(PropertyVerdict {
                text: collapse(&c[2]),
                kind: kind.label().to_string(),
                property_index: None,
                holds,
                trace,
            });
            continue;
        }
        if inconclusive_re().is_match(line) {
            inconclusive.push(line.to_string());
        } else if !line.starts_with("***") && error_re().is_match(line) {
            errors.push(line.to_string());
        }
        i += 1;
    }

    let mut report = VerificationReport {
        overall: Outcome::ToolError,
        verdicts,
        failed_property: None,
        raw_output: raw.to_string(),
        wall_time_ms: 0,
        error: None,
    };
    if !errors.is_empty() {
        report.error = Some(errors.join("\n"));
    } else if !inconclusive.is_empty() {
        report.error = Some(format!("inconclusive result: {}", inconclusive.join("\n")));
    } else if report.verdicts.is_empty() {
        report.error = Some("no verdict lines in model checker output".into());
    } else if let Some(idx) = report.verdicts.iter().position(|v| !v.holds) {
        match report.verdicts.iter().position(|v| !v.holds && v.trace.is_some()) {
            Some(first_traced) if first_traced == idx => {
                report.overall = Outcome::Refuted;
                report.failed_property = Some(idx);
            }
            _ => {
                report.error =
                    Some(format!("property '{}' is false but no counterexample was printed", report.verdicts[idx].text))
            }
        }
    } else {
        report.overall = Outcome::Proven;
    }
    report
}

#[derive(Clone, Copy)]
enum VerdictKind {
    Specification,
    Invariant,
}

impl VerdictKind {
    fn label(self) -> &'static str {
        match self {
            VerdictKind::Specification => "specification",
            VerdictKind::Invariant => "invariant",
        }
    }
}

/// Classifies output against the model it was produced for: every declared
/// property must have exactly one verdict.
///
/// Invariant verdicts map in order onto INVARSPECs; specification verdicts
/// map onto CTL properties first, then LTL, which is the order the checker
/// reports them in batch mode.
pub fn parse_nuxmv_output_for(raw: &str, doc: &SmvDocument) -> VerificationReport {
    let mut report = parse_nuxmv_output(raw);
    if report.overall == Outcome::ToolError {
        return report;
    }
    let invariants: Vec<usize> = doc.of_kind(PropertyKind::Invar).map(|(i, _)| i).collect();
    let specs: Vec<usize> =
        doc.of_kind(PropertyKind::Ctl).chain(doc.of_kind(PropertyKind::Ltl)).map(|(i, _)| i).collect();
    let (mut next_inv, mut next_spec) = (invariants.iter(), specs.iter());
    let mut mismatch = None;
    for v in &mut report.verdicts {
        let slot = if v.kind == "invariant" { next_inv.next() } else { next_spec.next() };
        match slot {
            Some(&idx) => {
                if loose(&v.text) != loose(&doc.properties[idx].text) {
                    log::debug!("verdict '{}' matched by order to '{}'", v.text, doc.properties[idx].text);
                }
                v.property_index = Some(idx);
            }
            None => mismatch = Some("more verdicts than declared properties"),
        }
    }
    if next_inv.next().is_some() || next_spec.next().is_some() {
        mismatch = Some("some declared properties have no verdict");
    }
    if let Some(m) = mismatch {
        report.overall = Outcome::ToolError;
        report.failed_property = None;
        report.error = Some(format!("{m}: {} declared, {} verdicts", doc.properties.len(), report.verdicts.len()));
    }
    report
}

fn loose(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace() && *c != '(' && *c != ')').collect()
}

/// Reads a counterexample starting at `lines[*i]`, leaving `*i` on the first
/// line after it. Returns `None` when no state header follows.
fn parse_trace(lines: &[&str], i: &mut usize) -> Option<Trace> {
    let mut description = None;
    let mut states: Vec<TraceState> = Vec::new();
    let mut current: IndexMap<String, String> = IndexMap::new();
    let mut loop_pending = false;
    let mut loop_start = None;
    let mut in_state = false;
    while *i < lines.len() {
        let line = lines[*i].trim();
        if verdict_re().is_match(line) {
            break;
        }
        if let Some(d) = line.strip_prefix("Trace Description:") {
            if !states.is_empty() {
                break;
            }
            description = Some(d.trim().to_string());
        } else if line.starts_with("-- as demonstrated") || line.starts_with("Trace Type:") || line.is_empty() {
        } else if line == "-- Loop starts here" {
            loop_pending = true;
        } else if let Some(c) = state_re().captures(line) {
            let step: u32 = c[3].parse().ok()?;
            if &c[1] == "State" {
                // Inputs printed before a state belong to that state.
                let base = states.last().map(|s| s.assignments.clone()).unwrap_or_default();
                let mut assignments = base;
                for (k, v) in current.drain(..) {
                    assignments.insert(k, v);
                }
                states.push(TraceState { step, assignments });
                if loop_pending {
                    loop_start = Some(step);
                    loop_pending = false;
                }
                in_state = true;
            } else {
                in_state = false;
            }
        } else if let Some((name, value)) = line.split_once(" = ") {
            if in_state {
                if let Some(s) = states.last_mut() {
                    s.assignments.insert(name.trim().to_string(), value.trim().to_string());
                }
            } else {
                current.insert(name.trim().to_string(), value.trim().to_string());
            }
        } else if states.is_empty() && description.is_none() {
            return None;
        } else {
            break;
        }
        *i += 1;
    }
    if let (false, Some(s)) = (current.is_empty(), states.last_mut()) {
        for (k, v) in current {
            s.assignments.insert(k, v);
        }
    }
    if states.is_empty() {
        return None;
    }
    Some(Trace { description, states, loop_start })
}
