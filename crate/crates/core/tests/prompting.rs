//! Rendered prompts against committed goldens, and the single-error policy.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite `tests/golden/prompts/` after an
//! intentional template change.

use std::path::{Path, PathBuf};

use proptest::prelude::*;
use stforge_core::prompting::{ChatExchange, ShotMode, TemplateSet};
use stforge_core::verifier::{parse_nuxmv_output_for, summarize_counterexample, SmvDocument};
use stforge_st::{check, CheckReport, Code, Diagnostic, Severity};

fn manifest_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(rel: &str) -> String {
    std::fs::read_to_string(manifest_dir().join("tests/fixtures").join(rel)).unwrap()
}

fn corpus(rel: &str) -> String {
    std::fs::read_to_string(manifest_dir().join("../../corpus/mini").join(rel)).unwrap()
}

fn transcript(messages: &[ChatExchange]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(&format!("=== {} ({}) ===\n{}\n", m.role.as_str(), m.stage.as_str(), m.content));
    }
    out
}

fn golden_path(name: &str) -> PathBuf {
    manifest_dir().join("tests/golden/prompts").join(format!("{name}.txt"))
}

fn assert_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from {}:\n{actual}", path.display());
}

#[test]
fn prompts_match_goldens() {
    let t = TemplateSet::builtin();
    let spec = fixture("replay/highbay/spec.txt");
    let plan = fixture("replay/highbay/responses/001-plan.txt");
    let broken = corpus("mutated/high_bay.st");
    let valid = corpus("valid/high_bay.st");
    let report = check(&broken);
    assert!(!report.pass);

    let one_false = SmvDocument::parse(&fixture("nuxmv/one_false.smv")).unwrap();
    let refuted = parse_nuxmv_output_for(&fixture("nuxmv/one_false.out"), &one_false);
    let (verdict, trace) = refuted.counterexample().unwrap();
    let property = one_false.properties[verdict.property_index.unwrap()].describe();
    let syntax = SmvDocument::parse(&fixture("nuxmv/syntax_error.smv")).unwrap();
    let tool_error = parse_nuxmv_output_for(&fixture("nuxmv/syntax_error.out"), &syntax).error.unwrap();
    let prefix: String = valid.lines().take(12).map(|l| format!("{l}\n")).collect();

    let cases: Vec<(&str, Vec<ChatExchange>)> = vec![
        ("plan", t.render_plan_prompt(&spec).unwrap()),
        ("generate_zero_shot", t.render_generation_prompt(&spec, &plan, ShotMode::ZeroShot).unwrap()),
        ("generate_zero_shot_no_plan", t.render_generation_prompt(&spec, "", ShotMode::ZeroShot).unwrap()),
        ("generate_one_shot", t.render_generation_prompt(&spec, &plan, ShotMode::OneShot).unwrap()),
        ("fix_syntax", t.render_fix_prompt_for(&broken, &report).unwrap()),
        ("to_smv", t.render_smv_prompt(&spec, &valid).unwrap()),
        ("fix_smv", t.render_smv_fix_prompt(&syntax.module_text, &tool_error).unwrap()),
        (
            "fix_verification",
            t.render_verification_fix_prompt(&valid, &property, &summarize_counterexample(trace, 20)).unwrap(),
        ),
        ("complete", t.render_completion_prompt(&prefix).unwrap()),
    ];
    for (name, messages) in cases {
        assert_golden(name, &transcript(&messages));
    }
}

/// Lines shaped like a rendered diagnostic.
fn diagnostic_lines(text: &str) -> Vec<String> {
    let re = regex::Regex::new(r"^[EW]\d{3}: .* at line \d+, column \d+$").unwrap();
    text.lines().filter(|l| re.is_match(l)).map(str::to_string).collect()
}

fn user_text(messages: &[ChatExchange]) -> String {
    messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
}

#[test]
fn three_real_errors_yield_one_diagnostic_line() {
    // Three independent faults: a missing semicolon, a misspelled keyword
    // and an unknown type.
    let code = "PROGRAM p\nVAR\n  a : INT;\n  b : BOOLEAN;\nEND_VAR\na := 1\nb := TRUE;\nIF a > 0 THN\n  a := 0;\nEND_IF;\nEND_PROGRAM\n";
    let report = check(code);
    assert!(report.errors().count() >= 3, "{}", report.render());
    let min = report.errors().min_by_key(|d| (d.line, d.column)).unwrap().to_string();
    let prompt = user_text(&TemplateSet::builtin().render_fix_prompt_for(code, &report).unwrap());
    assert_eq!(diagnostic_lines(&prompt), vec![min]);
}

fn diagnostic() -> impl Strategy<Value = Diagnostic> {
    let codes = prop::sample::select(vec![
        Code::MissingTerminator,
        Code::ExpectedToken,
        Code::UnknownType,
        Code::UndeclaredIdentifier,
        Code::UnsupportedConstruct,
    ]);
    (codes, 1u32..40, 1u32..30, "[a-z' ]{1,30}").prop_map(|(code, line, column, message)| Diagnostic {
        code,
        severity: code.severity(),
        message: message.trim().to_string() + ".",
        line,
        column,
        offset: 0,
        hint: None,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Whatever the report order, exactly the (line, column)-minimal error
    /// is rendered.
    #[test]
    fn only_the_earliest_error_is_rendered(diags in proptest::collection::vec(diagnostic(), 1..8)) {
        prop_assume!(diags.iter().any(|d| d.severity == Severity::Error));
        let report = CheckReport {
            file_id: "p".into(),
            error_count: diags.iter().filter(|d| d.severity == Severity::Error).count(),
            warning_count: diags.iter().filter(|d| d.severity == Severity::Warning).count(),
            pass: false,
            diagnostics: diags.clone(),
        };
        let expected = diags
            .iter()
            .filter(|d| d.severity == Severity::Error)
            .min_by_key(|d| (d.line, d.column))
            .unwrap();
        let code = corpus("valid/blinker.st");
        let prompt = user_text(&TemplateSet::builtin().render_fix_prompt_for(&code, &report).unwrap());
        let lines = diagnostic_lines(&prompt);
        prop_assert_eq!(lines.len(), 1);
        prop_assert_eq!(&lines[0], &expected.to_string());
    }

    /// Values are embedded whole, including braces and template-like text.
    #[test]
    fn code_is_never_truncated_or_expanded(code in "(?s).{1,400}") {
        let t = TemplateSet::builtin();
        let d = Diagnostic {
            code: Code::ExpectedToken,
            severity: Severity::Error,
            message: "expected ';'".into(),
            line: 1,
            column: 1,
            offset: 0,
            hint: None,
        };
        prop_assert!(user_text(&t.render_fix_prompt(&code, &d).unwrap()).contains(&code));
        prop_assert!(user_text(&t.render_completion_prompt(&code).unwrap()).contains(&code));
        prop_assert!(user_text(&t.render_smv_prompt("spec", &code).unwrap()).contains(&code));
        prop_assert!(user_text(&t.render_verification_fix_prompt(&code, "INVARSPEC x", "step 1: x = FALSE").unwrap()).contains(&code));
    }

    /// Rendering is a pure function of its inputs.
    #[test]
    fn rendering_is_deterministic(spec in "[A-Za-z ,.{}]{1,200}", plan in "[A-Za-z \n]{0,100}") {
        let t = TemplateSet::builtin();
        prop_assume!(!spec.trim().is_empty());
        for mode in [ShotMode::ZeroShot, ShotMode::OneShot] {
            prop_assert_eq!(
                t.render_generation_prompt(&spec, &plan, mode).unwrap(),
                t.render_generation_prompt(&spec, &plan, mode).unwrap()
            );
        }
    }
}
