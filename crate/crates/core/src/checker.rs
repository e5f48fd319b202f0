//! Syntax oracles. The built-in frontend is the default; an external MATIEC
//! `iec2c` can stand in for parity with a reference compiler.

use std::path::PathBuf;
use std::process::Command;
use std::sync::OnceLock;

use regex::Regex;
use stforge_st::{check_named, CheckReport, Code, Diagnostic, Span};
use thiserror::Error;

pub const IEC2C_ENV: &str = "STFORGE_IEC2C";

#[derive(Debug, Error)]
pub enum CheckerError {
    #[error("external compiler not found: {0}")]
    BinaryNotFound(String),
    #[error("external compiler failed: {0}")]
    Io(String),
}

pub trait Checker: Send + Sync {
    fn check(&self, file_id: &str, source: &str) -> Result<CheckReport, CheckerError>;
    fn id(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinChecker;

impl Checker for BuiltinChecker {
    fn check(&self, file_id: &str, source: &str) -> Result<CheckReport, CheckerError> {
        Ok(check_named(file_id, source))
    }

    fn id(&self) -> &'static str {
        "builtin"
    }
}

/// Runs `iec2c` on a temporary copy of the source and maps its
/// `file:L-C..L-C: error: message` lines onto E090 diagnostics.
#[derive(Debug, Clone, Default)]
pub struct MatiecChecker {
    /// Falls back to `$STFORGE_IEC2C`, then `iec2c` on the search path.
    pub binary: Option<PathBuf>,
    /// Standard library directory passed with `-I`.
    pub include_dir: Option<PathBuf>,
}

fn matiec_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^.*?:(\d+)-(\d+)\.\.\d+-\d+: (?:error|warning): (.*)$").unwrap())
}

/// Parses MATIEC output into diagnostics. A failing exit without any
/// recognised line still yields one diagnostic so the file never passes.
pub fn parse_matiec_output(output: &str, success: bool) -> Vec<Diagnostic> {
    let mut diags: Vec<Diagnostic> = output
        .lines()
        .filter_map(|l| matiec_line_re().captures(l.trim()))
        .map(|c| {
            let line = c[1].parse().unwrap_or(1);
            let column = c[2].parse().unwrap_or(1);
            Diagnostic::new(Code::ExternalTool, Span { line, column, offset: 0, len: 0 }, c[3].trim().to_string())
        })
        .collect();
    if diags.is_empty() && !success {
        let first = output.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("compiler reported failure");
        diags.push(Diagnostic::new(
            Code::ExternalTool,
            Span { line: 1, column: 1, offset: 0, len: 0 },
            first.to_string(),
        ));
    }
    diags.sort_by_key(|d| (d.line, d.column));
    diags
}

impl Checker for MatiecChecker {
    fn check(&self, file_id: &str, source: &str) -> Result<CheckReport, CheckerError> {
        let binary = self
            .binary
            .clone()
            .or_else(|| std::env::var_os(IEC2C_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("iec2c"));
        let dir = tempfile::tempdir().map_err(|e| CheckerError::Io(e.to_string()))?;
        let file = dir.path().join("input.st");
        std::fs::write(&file, source).map_err(|e| CheckerError::Io(e.to_string()))?;
        let mut cmd = Command::new(&binary);
        if let Some(inc) = &self.include_dir {
            cmd.arg("-I").arg(inc);
        }
        cmd.arg("-T").arg(dir.path()).arg(&file);
        let out = match cmd.output() {
            Ok(o) => o,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CheckerError::BinaryNotFound(binary.display().to_string()))
            }
            Err(e) => return Err(CheckerError::Io(e.to_string())),
        };
        let text = format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
        let diagnostics = parse_matiec_output(&text, out.status.success());
        let error_count = diagnostics.iter().filter(|d| d.is_error()).count();
        Ok(CheckReport {
            file_id: file_id.to_string(),
            warning_count: diagnostics.len() - error_count,
            diagnostics,
            error_count,
            pass: error_count == 0,
        })
    }

    fn id(&self) -> &'static str {
        "matiec"
    }
}
