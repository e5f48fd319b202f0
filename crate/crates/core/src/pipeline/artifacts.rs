use std::path::Path;

use serde::Serialize;

use super::{PipelineError, PipelineRun, StepKind};

pub const RUN_FILE: &str = "run.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";

#[derive(Serialize)]
struct Timing {
    seq: usize,
    step: StepKind,
    duration_ms: u64,
}

fn write(path: &Path, contents: &str) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|e| PipelineError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("run records serialize") + "\n"
}

/// Writes the per-run layout into `dir`:
///
/// | file | content |
/// |------|---------|
/// | `plan.md` | design plan, when one was produced |
/// | `candidate_<i>.st` | every candidate, numbered from 1 |
/// | `final.st` | the last candidate |
/// | `model.smv` | the last SMV model |
/// | `verification.txt` | verdict summary followed by raw checker output |
/// | `run.json` | the run record; identical inputs give identical bytes |
/// | `timings.json` | wall-clock duration of every history entry |
/// | `transcript.jsonl` | every prompt message and reply |
pub fn write_artifacts(run: &PipelineRun, dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let a = &run.artifacts;
    if let Some(plan) = &a.plan {
        write(&dir.join("plan.md"), &format!("{}\n", plan.trim_end()))?;
    }
    for (i, code) in a.candidates.iter().enumerate() {
        write(&dir.join(format!("candidate_{}.st", i + 1)), &with_newline(code))?;
    }
    if let Some(code) = a.final_code() {
        write(&dir.join("final.st"), &with_newline(code))?;
    }
    if let Some(smv) = &a.smv {
        write(&dir.join("model.smv"), &with_newline(smv))?;
    }
    if let Some(report) = &a.verification {
        let text = format!("{}\n--- raw output ---\n{}", report.summary(), with_newline(&report.raw_output));
        write(&dir.join("verification.txt"), &text)?;
    }
    write(&dir.join(RUN_FILE), &to_json(run))?;
    let timings: Vec<Timing> =
        run.history.iter().map(|r| Timing { seq: r.seq, step: r.step, duration_ms: r.duration_ms }).collect();
    write(&dir.join(TIMINGS_FILE), &to_json(&timings))?;
    let transcript: String =
        run.transcript.iter().map(|t| serde_json::to_string(t).expect("transcript serializes") + "\n").collect();
    write(&dir.join(TRANSCRIPT_FILE), &transcript)?;
    Ok(())
}

fn with_newline(text: &str) -> String {
    if text.is_empty() || text.ends_with('\n') {
        text.to_string()
    } else {
        format!("{text}\n")
    }
}
