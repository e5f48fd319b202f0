//! Test doubles shared by the integration targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use regex::Regex;
use stforge_core::gateway::{FnBackend, GatewayError};
use stforge_core::prompting::Stage;

pub fn corpus_dir(sub: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus/mini").join(sub)
}

pub fn valid_sources() -> Vec<(String, String)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus_dir("valid"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "st"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            (p.file_stem().unwrap().to_string_lossy().into_owned(), text.trim_end().to_string())
        })
        .collect()
}

pub fn fenced(code: &str) -> String {
    format!("```iecst\n{code}\n```\n")
}

/// Assignment lines whose trailing `;`, removed on its own, makes the file
/// fail the check. 0-based.
pub fn seedable_lines(source: &str) -> Vec<usize> {
    let lines: Vec<&str> = source.split('\n').collect();
    (0..lines.len())
        .filter(|&i| {
            let t = lines[i].trim_end();
            t.contains(":=") && t.ends_with(';') && !t.trim_start().starts_with("(*")
        })
        .filter(|&i| !stforge_st::check(&seed_errors(source, &[i])).pass)
        .collect()
}

/// Removes the trailing `;` of each listed line. Line count is unchanged, so
/// every error stays on its own line.
pub fn seed_errors(source: &str, lines: &[usize]) -> String {
    source
        .split('\n')
        .enumerate()
        .map(|(i, l)| if lines.contains(&i) { l.trim_end().trim_end_matches(';').to_string() } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Code block and reported line of a fix_syntax prompt.
pub fn parse_fix_prompt(prompt: &str) -> (String, usize) {
    let start = prompt.find("```iecst\n").expect("code fence") + "```iecst\n".len();
    let end = prompt.rfind("\n```").expect("closing fence");
    let line = Regex::new(r"at line (\d+), column \d+").unwrap();
    let reported = line.captures(&prompt[end..]).expect("diagnostic line")[1].parse().unwrap();
    (prompt[start..end].to_string(), reported)
}

/// Emits `candidate` for generation, then repairs exactly the reported
/// error: the line closest to the diagnostic that differs from `original`
/// is restored, and nothing else changes.
pub fn perfect_fixer(original: String, candidate: String) -> FnBackend {
    FnBackend::new("perfect-fixer", move |req| match req.stage() {
        Some(Stage::Generate) => Ok(fenced(&candidate)),
        Some(Stage::FixSyntax) => {
            let prompt = &req.messages.last().unwrap().content;
            let (code, reported) = parse_fix_prompt(prompt);
            let mut lines: Vec<String> = code.split('\n').map(str::to_string).collect();
            let want: Vec<&str> = original.split('\n').collect();
            assert_eq!(lines.len(), want.len(), "fixer expects line-local errors");
            let target = (0..lines.len())
                .filter(|&i| lines[i] != want[i])
                .min_by_key(|&i| ((i + 1).abs_diff(reported), i))
                .expect("a reported error implies a seeded line remains");
            lines[target] = want[target].to_string();
            Ok(fenced(&lines.join("\n")))
        }
        other => Err(GatewayError::BadResponse(format!("perfect fixer got stage {other:?}"))),
    })
}

/// Answers every fix request with the code it was given.
pub fn never_improves(candidate: String) -> FnBackend {
    FnBackend::new("never-improves", move |req| match req.stage() {
        Some(Stage::Generate) => Ok(fenced(&candidate)),
        Some(Stage::FixSyntax) => Ok(fenced(&parse_fix_prompt(&req.messages.last().unwrap().content).0)),
        other => Err(GatewayError::BadResponse(format!("unexpected stage {other:?}"))),
    })
}
