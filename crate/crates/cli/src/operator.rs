use std::io::{BufRead, Write};
use std::process::Command;

use stforge_core::pipeline::{Checkpoint, GateDecision, Operator};

/// Reviews checkpoints on the terminal. Edits open `$VISUAL` or `$EDITOR`
/// (falling back to `vi`) on a temporary copy of the artifact.
pub struct ConsoleOperator;

impl ConsoleOperator {
    fn edit(&self, checkpoint: Checkpoint, artifact: &str) -> Option<String> {
        let suffix = match checkpoint {
            Checkpoint::Plan => ".md",
            Checkpoint::Smv => ".smv",
            Checkpoint::Candidate | Checkpoint::Verified => ".st",
        };
        let file = tempfile::Builder::new().prefix("stforge-edit-").suffix(suffix).tempfile().ok()?;
        std::fs::write(file.path(), artifact).ok()?;
        let editor = std::env::var("VISUAL").or_else(|_| std::env::var("EDITOR")).unwrap_or_else(|_| "vi".into());
        let mut parts = editor.split_whitespace();
        let program = parts.next()?;
        match Command::new(program).args(parts).arg(file.path()).status() {
            Ok(s) if s.success() => std::fs::read_to_string(file.path()).ok(),
            Ok(s) => {
                eprintln!("editor exited with {s}; keeping the artifact unchanged");
                None
            }
            Err(e) => {
                eprintln!("cannot start editor '{program}': {e}");
                None
            }
        }
    }
}

impl Operator for ConsoleOperator {
    fn review(&self, checkpoint: Checkpoint, artifact: &str) -> GateDecision {
        let mut err = std::io::stderr().lock();
        let _ = writeln!(
            err,
            "\n==== {} ====\n{}\n==== end {} ====",
            checkpoint.as_str(),
            artifact.trim_end(),
            checkpoint.as_str()
        );
        loop {
            let _ = write!(err, "[a]pprove, [e]dit, a[b]ort? ");
            let _ = err.flush();
            let mut line = String::new();
            match std::io::stdin().lock().read_line(&mut line) {
                // End of input cannot approve anything.
                Ok(0) | Err(_) => return GateDecision::Abort,
                Ok(_) => {}
            }
            match line.trim() {
                "a" | "approve" => return GateDecision::Approve,
                "b" | "abort" => return GateDecision::Abort,
                "e" | "edit" => {
                    if let Some(text) = self.edit(checkpoint, artifact) {
                        return GateDecision::Edit(text);
                    }
                }
                _ => {}
            }
        }
    }
}
