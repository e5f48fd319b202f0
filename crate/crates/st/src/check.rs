use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostic::{sort_diagnostics, Diagnostic};
use crate::lexer::tokenize;
use crate::parser::parse;
use crate::sema;

/// Outcome of checking one source file. Identical input always yields an
/// identical report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub file_id: String,
    /// Sorted by (line, column).
    pub diagnostics: Vec<Diagnostic>,
    pub error_count: usize,
    pub warning_count: usize,
    pub pass: bool,
}

impl CheckReport {
    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.is_error())
    }

    /// The error a single repair step should address: the earliest one by
    /// (line, column), first emitted on ties.
    pub fn first_error(&self) -> Option<&Diagnostic> {
        self.errors().min_by_key(|d| (d.line, d.column))
    }

    /// One diagnostic per line, in report order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for d in &self.diagnostics {
            out.push_str(&d.to_string());
            out.push('\n');
        }
        out
    }
}

pub fn check(source: &str) -> CheckReport {
    check_named("<input>", source)
}

pub fn check_named(file_id: &str, source: &str) -> CheckReport {
    let lexed = tokenize(source);
    let parsed = parse(&lexed.tokens);
    let mut diagnostics = lexed.diagnostics;
    diagnostics.extend(parsed.diagnostics);
    diagnostics.extend(sema::resolve(&parsed.tree));
    sort_diagnostics(&mut diagnostics);
    let error_count = diagnostics.iter().filter(|d| d.is_error()).count();
    CheckReport {
        file_id: file_id.to_string(),
        warning_count: diagnostics.len() - error_count,
        diagnostics,
        error_count,
        pass: error_count == 0,
    }
}

/// Checks a file on disk; the report's `file_id` is the file stem.
pub fn check_path(path: &Path) -> std::io::Result<CheckReport> {
    let bytes = std::fs::read(path)?;
    let source = String::from_utf8_lossy(&bytes);
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(check_named(&id, &source))
}
