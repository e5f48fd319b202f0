use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::output::parse_nuxmv_output_for;
use super::{Outcome, SmvDocument, VerificationReport, VerifierError};

/// Environment variable naming the nuXmv binary when no path is configured.
pub const NUXMV_ENV: &str = "STFORGE_NUXMV";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Engine {
    /// The checker's own default (BDD-based).
    #[default]
    Default,
    Bmc {
        length: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NuxmvConfig {
    /// Falls back to `$STFORGE_NUXMV`, then `nuXmv` on the search path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub engine: Engine,
}

fn default_timeout() -> u64 {
    120
}

impl Default for NuxmvConfig {
    fn default() -> Self {
        NuxmvConfig { binary: None, timeout_secs: default_timeout(), engine: Engine::Default }
    }
}

impl NuxmvConfig {
    pub fn resolved_binary(&self) -> PathBuf {
        self.binary
            .clone()
            .or_else(|| std::env::var_os(NUXMV_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("nuXmv"))
    }
}

const POLL: Duration = Duration::from_millis(20);

/// Runs nuXmv in batch mode on `doc` inside a fresh temporary directory.
///
/// The directory is removed when the model is proven and kept otherwise, with
/// its path logged. Exceeding the timeout kills the process and yields
/// `timeout`. A missing binary is a configuration error, never a verdict.
pub fn run_nuxmv(doc: &SmvDocument, config: &NuxmvConfig) -> Result<VerificationReport, VerifierError> {
    if doc.properties.is_empty() {
        return Err(VerifierError::InvalidModel("no properties to check".into()));
    }
    let binary = config.resolved_binary();
    let dir = tempfile::Builder::new()
        .prefix("stforge-nuxmv-")
        .tempdir()
        .map_err(|e| VerifierError::io(&std::env::temp_dir(), e))?;
    let model = dir.path().join("model.smv");
    std::fs::write(&model, &doc.module_text).map_err(|e| VerifierError::io(&model, e))?;

    let mut cmd = Command::new(&binary);
    if let Engine::Bmc { length } = config.engine {
        cmd.arg("-bmc").arg("-bmc_length").arg(length.to_string());
    }
    cmd.arg("model.smv").current_dir(dir.path()).stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped());

    let started = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(VerifierError::BinaryNotFound(binary.display().to_string()))
        }
        Err(e) => return Err(VerifierError::io(&binary, e)),
    };
    let stdout = drain(child.stdout.take());
    let stderr = drain(child.stderr.take());
    let deadline = started + Duration::from_secs(config.timeout_secs);
    let status = loop {
        match child.try_wait().map_err(|e| VerifierError::io(&binary, e))? {
            Some(status) => break Some(status),
            None if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            None => thread::sleep(POLL),
        }
    };
    let mut raw = stdout.join().unwrap_or_default();
    let err = stderr.join().unwrap_or_default();
    if !err.is_empty() {
        if !raw.is_empty() && !raw.ends_with('\n') {
            raw.push('\n');
        }
        raw.push_str(&err);
    }
    let wall_time_ms = started.elapsed().as_millis() as u64;

    let mut report = match status {
        None => VerificationReport {
            overall: Outcome::Timeout,
            error: Some(format!("model checker exceeded {} s", config.timeout_secs)),
            ..VerificationReport::tool_error(raw, String::new())
        },
        Some(status) => {
            let mut r = parse_nuxmv_output_for(&raw, doc);
            if !status.success() && r.overall != Outcome::ToolError {
                r.overall = Outcome::ToolError;
                r.failed_property = None;
                r.error = Some(format!("model checker exited with {status}"));
            }
            r
        }
    };
    report.wall_time_ms = wall_time_ms;

    if report.overall != Outcome::Proven {
        let kept = dir.keep();
        log::warn!("keeping model checker workspace {} ({:?})", kept.display(), report.overall);
    }
    Ok(report)
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}
