//! Stage-specific prompt construction from editable template files.
//!
//! A template file holds a system part and a user part:
//!
//! ```text
//! === system ===
//! You are ...
//! === user ===
//! ... {spec} ...
//! ```
//!
//! `{name}` is a placeholder and `{{` / `}}` are literal braces. Rendering is
//! a single pass, so braces inside substituted values are never interpreted.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use stforge_st::{CheckReport, Diagnostic};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Plan,
    Generate,
    FixSyntax,
    ToSmv,
    FixSmv,
    FixVerification,
    Complete,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Plan,
        Stage::Generate,
        Stage::FixSyntax,
        Stage::ToSmv,
        Stage::FixSmv,
        Stage::FixVerification,
        Stage::Complete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Plan => "plan",
            Stage::Generate => "generate",
            Stage::FixSyntax => "fix_syntax",
            Stage::ToSmv => "to_smv",
            Stage::FixSmv => "fix_smv",
            Stage::FixVerification => "fix_verification",
            Stage::Complete => "complete",
        }
    }

    pub fn is_fix(self) -> bool {
        matches!(self, Stage::FixSyntax | Stage::FixSmv | Stage::FixVerification)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| format!("unknown stage '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotMode {
    ZeroShot,
    #[default]
    OneShot,
}

impl FromStr for ShotMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero_shot" | "zero-shot" => Ok(ShotMode::ZeroShot),
            "one_shot" | "one-shot" => Ok(ShotMode::OneShot),
            _ => Err(format!("unknown shot mode '{s}' (expected zero_shot or one_shot)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub role: Role,
    pub content: String,
    pub stage: Stage,
    pub iteration: u32,
}

/// Sets the iteration index on every message of a transcript.
pub fn with_iteration(mut messages: Vec<ChatExchange>, iteration: u32) -> Vec<ChatExchange> {
    for m in &mut messages {
        m.iteration = iteration;
    }
    messages
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template '{template}' references placeholder '{{{name}}}' but no value was supplied")]
    MissingPlaceholder { template: String, name: String },
    #[error("template '{template}' has an unmatched brace at byte {offset}")]
    UnmatchedBrace { template: String, offset: usize },
    #[error("template '{template}' is malformed: {reason}")]
    Malformed { template: String, reason: String },
    #[error("cannot read template {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("no error diagnostic to build a fix prompt from")]
    NoDiagnostic,
    #[error("the diagnostic is a warning; only errors are fed back")]
    NotAnError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub stage: Stage,
    /// File stem, e.g. `generate_one_shot`.
    pub name: String,
    pub shot_mode: Option<ShotMode>,
    pub system_text: String,
    pub user_text_pattern: String,
}

const SYSTEM_MARKER: &str = "=== system ===";
const USER_MARKER: &str = "=== user ===";

impl PromptTemplate {
    pub fn parse(stage: Stage, name: &str, text: &str) -> Result<Self, PromptError> {
        let malformed =
            |reason: &str| PromptError::Malformed { template: name.to_string(), reason: reason.to_string() };
        let text = text.replace("\r\n", "\n");
        let rest = text
            .trim_start()
            .strip_prefix(SYSTEM_MARKER)
            .ok_or_else(|| malformed("must start with '=== system ==='"))?;
        let (system, user) = rest.split_once(USER_MARKER).ok_or_else(|| malformed("missing '=== user ===' line"))?;
        let shot_mode = match name {
            "generate_zero_shot" => Some(ShotMode::ZeroShot),
            "generate_one_shot" => Some(ShotMode::OneShot),
            _ => None,
        };
        let template = PromptTemplate {
            stage,
            name: name.to_string(),
            shot_mode,
            system_text: system.trim().to_string(),
            user_text_pattern: user.trim_matches('\n').to_string(),
        };
        template.placeholders()?;
        Ok(template)
    }

    /// Placeholder names referenced by the system and user parts.
    pub fn placeholders(&self) -> Result<Vec<String>, PromptError> {
        let mut names = Vec::new();
        for part in [&self.system_text, &self.user_text_pattern] {
            for seg in segments(&self.name, part)? {
                if let Segment::Placeholder(n) = seg {
                    if !names.iter().any(|x| x == n) {
                        names.push(n.to_string());
                    }
                }
            }
        }
        Ok(names)
    }

    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<Vec<ChatExchange>, PromptError> {
        let system = render_text(&self.name, &self.system_text, values)?;
        let user = render_text(&self.name, &self.user_text_pattern, values)?;
        let mut out = Vec::with_capacity(2);
        if !system.is_empty() {
            out.push(ChatExchange { role: Role::System, content: system, stage: self.stage, iteration: 0 });
        }
        out.push(ChatExchange { role: Role::User, content: user, stage: self.stage, iteration: 0 });
        Ok(out)
    }
}

enum Segment<'a> {
    Text(&'a str),
    Brace(char),
    Placeholder(&'a str),
}

fn segments<'a>(template: &str, text: &'a str) -> Result<Vec<Segment<'a>>, PromptError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Segment::Text(&text[start..i]));
                out.push(Segment::Brace('{'));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Segment::Text(&text[start..i]));
                out.push(Segment::Brace('}'));
                i += 2;
                start = i;
            }
            b'{' => {
                let close = text[i + 1..].find('}').map(|p| i + 1 + p);
                let name = close.map(|c| &text[i + 1..c]);
                match (close, name) {
                    (Some(c), Some(n)) if !n.is_empty() && n.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') => {
                        out.push(Segment::Text(&text[start..i]));
                        out.push(Segment::Placeholder(n));
                        i = c + 1;
                        start = i;
                    }
                    _ => return Err(PromptError::UnmatchedBrace { template: template.to_string(), offset: i }),
                }
            }
            b'}' => return Err(PromptError::UnmatchedBrace { template: template.to_string(), offset: i }),
            _ => i += 1,
        }
    }
    out.push(Segment::Text(&text[start..]));
    Ok(out)
}

fn render_text(template: &str, text: &str, values: &BTreeMap<&str, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    for seg in segments(template, text)? {
        match seg {
            Segment::Text(t) => out.push_str(t),
            Segment::Brace(c) => out.push(c),
            Segment::Placeholder(n) => match values.get(n) {
                Some(v) => out.push_str(v),
                None => {
                    return Err(PromptError::MissingPlaceholder { template: template.to_string(), name: n.to_string() })
                }
            },
        }
    }
    Ok(out)
}

/// Template file stems, in the order they are loaded.
pub const TEMPLATE_FILES: [(&str, Stage); 8] = [
    ("plan", Stage::Plan),
    ("generate_zero_shot", Stage::Generate),
    ("generate_one_shot", Stage::Generate),
    ("fix_syntax", Stage::FixSyntax),
    ("to_smv", Stage::ToSmv),
    ("fix_smv", Stage::FixSmv),
    ("fix_verification", Stage::FixVerification),
    ("complete", Stage::Complete),
];

pub const EXEMPLAR_FILE: &str = "exemplar.st";

const BUILTIN: [(&str, &str); 8] = [
    ("plan", include_str!("../templates/plan.txt")),
    ("generate_zero_shot", include_str!("../templates/generate_zero_shot.txt")),
    ("generate_one_shot", include_str!("../templates/generate_one_shot.txt")),
    ("fix_syntax", include_str!("../templates/fix_syntax.txt")),
    ("to_smv", include_str!("../templates/to_smv.txt")),
    ("fix_smv", include_str!("../templates/fix_smv.txt")),
    ("fix_verification", include_str!("../templates/fix_verification.txt")),
    ("complete", include_str!("../templates/complete.txt")),
];
const BUILTIN_EXEMPLAR: &str = include_str!("../templates/exemplar.st");

#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, PromptTemplate>,
    exemplar: String,
}

impl TemplateSet {
    /// The templates compiled into the binary.
    pub fn builtin() -> TemplateSet {
        let mut templates = BTreeMap::new();
        for ((name, stage), (bname, text)) in TEMPLATE_FILES.iter().zip(BUILTIN.iter()) {
            debug_assert_eq!(name, bname);
            let t = PromptTemplate::parse(*stage, name, text).expect("builtin templates are well-formed");
            templates.insert(name.to_string(), t);
        }
        let set = TemplateSet { templates, exemplar: BUILTIN_EXEMPLAR.trim_end().to_string() };
        set.validate().expect("builtin templates are well-formed");
        set
    }

    /// Loads every template file from `dir`. A missing file, including the
    /// one-shot exemplar, is a configuration error.
    pub fn load(dir: &Path) -> Result<TemplateSet, PromptError> {
        let read = |file: &str| {
            let path = dir.join(file);
            std::fs::read_to_string(&path)
                .map_err(|e| PromptError::Io { path: path.display().to_string(), reason: e.to_string() })
        };
        let mut templates = BTreeMap::new();
        for (name, stage) in TEMPLATE_FILES {
            let text = read(&format!("{name}.txt"))?;
            templates.insert(name.to_string(), PromptTemplate::parse(stage, name, &text)?);
        }
        let exemplar = read(EXEMPLAR_FILE)?.trim_end().to_string();
        if exemplar.trim().is_empty() {
            return Err(PromptError::EmptyInput("exemplar.st"));
        }
        let set = TemplateSet { templates, exemplar };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<(), PromptError> {
        let one_shot = self.get("generate_one_shot");
        let count = one_shot.placeholders()?.iter().filter(|p| *p == "example_code").count();
        let occurrences = one_shot.user_text_pattern.matches("{example_code}").count()
            + one_shot.system_text.matches("{example_code}").count();
        if count != 1 || occurrences != 1 {
            return Err(PromptError::Malformed {
                template: one_shot.name.clone(),
                reason: "must embed {example_code} exactly once".to_string(),
            });
        }
        if self.get("generate_zero_shot").placeholders()?.iter().any(|p| p == "example_code") {
            return Err(PromptError::Malformed {
                template: "generate_zero_shot".to_string(),
                reason: "must not embed an exemplar".to_string(),
            });
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> &PromptTemplate {
        &self.templates[name]
    }

    pub fn exemplar(&self) -> &str {
        &self.exemplar
    }

    pub fn render_plan_prompt(&self, spec: &str) -> Result<Vec<ChatExchange>, PromptError> {
        if spec.trim().is_empty() {
            return Err(PromptError::EmptyInput("specification"));
        }
        self.get("plan").render(&values([("spec", spec.trim_end().to_string())]))
    }

    /// An empty plan (ablation runs without the planning stage) drops the
    /// plan section entirely.
    pub fn render_generation_prompt(
        &self,
        spec: &str,
        plan: &str,
        shot_mode: ShotMode,
    ) -> Result<Vec<ChatExchange>, PromptError> {
        if spec.trim().is_empty() {
            return Err(PromptError::EmptyInput("specification"));
        }
        let plan_section = if plan.trim().is_empty() {
            String::new()
        } else {
            format!("\nDesign plan to follow:\n{}\n", plan.trim_end())
        };
        let mut v = values([("spec", spec.trim_end().to_string()), ("plan_section", plan_section)]);
        let name = match shot_mode {
            ShotMode::ZeroShot => "generate_zero_shot",
            ShotMode::OneShot => {
                v.insert("example_code", self.exemplar.clone());
                "generate_one_shot"
            }
        };
        self.get(name).render(&v)
    }

    /// Embeds the full code and exactly one diagnostic line, followed by its
    /// hint when present.
    pub fn render_fix_prompt(&self, code: &str, diagnostic: &Diagnostic) -> Result<Vec<ChatExchange>, PromptError> {
        if !diagnostic.is_error() {
            return Err(PromptError::NotAnError);
        }
        let mut text = diagnostic.to_string();
        if let Some(h) = &diagnostic.hint {
            text.push_str("\nHint: ");
            text.push_str(h);
        }
        self.get("fix_syntax").render(&values([("code", code.to_string()), ("diagnostic", text)]))
    }

    /// Fix prompt for the earliest error of a report.
    pub fn render_fix_prompt_for(&self, code: &str, report: &CheckReport) -> Result<Vec<ChatExchange>, PromptError> {
        let first = report.first_error().ok_or(PromptError::NoDiagnostic)?;
        self.render_fix_prompt(code, first)
    }

    pub fn render_smv_prompt(&self, spec: &str, code: &str) -> Result<Vec<ChatExchange>, PromptError> {
        if spec.trim().is_empty() {
            return Err(PromptError::EmptyInput("specification"));
        }
        self.get("to_smv").render(&values([("spec", spec.trim_end().to_string()), ("code", code.to_string())]))
    }

    pub fn render_smv_fix_prompt(&self, smv_text: &str, tool_error: &str) -> Result<Vec<ChatExchange>, PromptError> {
        if tool_error.trim().is_empty() {
            return Err(PromptError::EmptyInput("tool error"));
        }
        self.get("fix_smv")
            .render(&values([("smv", smv_text.to_string()), ("tool_error", tool_error.trim_end().to_string())]))
    }

    pub fn render_verification_fix_prompt(
        &self,
        code: &str,
        property: &str,
        counterexample: &str,
    ) -> Result<Vec<ChatExchange>, PromptError> {
        if counterexample.trim().is_empty() {
            return Err(PromptError::EmptyInput("counterexample"));
        }
        self.get("fix_verification").render(&values([
            ("code", code.to_string()),
            ("property", property.to_string()),
            ("counterexample", counterexample.trim_end().to_string()),
        ]))
    }

    pub fn render_completion_prompt(&self, prefix: &str) -> Result<Vec<ChatExchange>, PromptError> {
        if prefix.is_empty() {
            return Err(PromptError::EmptyInput("code prefix"));
        }
        self.get("complete").render(&values([("code", prefix.to_string())]))
    }
}

fn values<const N: usize>(pairs: [(&'static str, String); N]) -> BTreeMap<&'static str, String> {
    pairs.into_iter().collect()
}

/// Joins a transcript into one text, as used for single-string prompt formats.
pub fn flatten(messages: &[ChatExchange]) -> String {
    messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n\n")
}
