//! Acceptance suite. Runs without the libtest harness so each criterion
//! prints exactly one PASS or FAIL line; the process fails if any criterion
//! does.
//!
//! Pinned tolerances: first diagnostic within 1 line of the mutation; exact
//! rational equality for pass@k; wall-clock limits of 5 s (corpus), 30 s
//! (dataset) and 60 s (replay).

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use stforge_core::checker::BuiltinChecker;
use stforge_core::dataset::{cull, derive, split, DerivedDataset, RecordKind};
use stforge_core::gateway::{BackendKind, Gateway};
use stforge_core::metrics::{pass_at_k_exact, RunMetrics, TaskResult};
use stforge_core::pipeline::{run_pipeline, Pipeline, PipelineConfig, PipelineInput, RunStatus, StepKind};
use stforge_core::prompting::{Stage, TemplateSet};
use stforge_core::verifier::{
    parse_nuxmv_output, parse_nuxmv_output_for, NuxmvConfig, NuxmvVerifier, Outcome, SmvDocument, Verifier,
    VerifierError,
};
use stforge_st::{check, check_path, CheckReport, Code, Diagnostic, Severity};

type Verdict = Result<String, String>;

fn manifest_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let took = started.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))?;
    Ok(took)
}

#[derive(serde::Deserialize)]
struct Mutation {
    file: String,
    line: u32,
}

fn corpus_gate() -> Verdict {
    let started = Instant::now();
    let mut valid = 0;
    for (id, _) in common::valid_sources() {
        let r = check_path(&common::corpus_dir("valid").join(format!("{id}.st"))).map_err(|e| e.to_string())?;
        ensure(r.pass, || format!("valid/{id}.st fails:\n{}", r.render()))?;
        valid += 1;
    }
    ensure(valid >= 25, || format!("only {valid} valid files"))?;
    let text = std::fs::read_to_string(common::corpus_dir("mutations.json")).map_err(|e| e.to_string())?;
    let mutations: Vec<Mutation> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    ensure(mutations.len() >= 25, || format!("only {} mutations", mutations.len()))?;
    for m in &mutations {
        let r = check_path(&common::corpus_dir("mutated").join(&m.file)).map_err(|e| e.to_string())?;
        ensure(!r.pass, || format!("mutated/{} passes", m.file))?;
        let first = &r.diagnostics[0];
        ensure(first.line.abs_diff(m.line) <= 1, || {
            format!("mutated/{}: first diagnostic at line {}, mutation at {}", m.file, first.line, m.line)
        })?;
    }
    let took = within(Duration::from_secs(5), started)?;
    Ok(format!("{valid} valid pass, {} mutated fail within 1 line, {took:.2?}", mutations.len()))
}

fn ratio(a: u64, b: u64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

fn pass_at_k_oracle() -> Verdict {
    let mut cases = 0;
    for n in 1..=8u64 {
        for c in 0..=n {
            for k in 1..=n {
                let (mut hit, mut total) = (0, 0);
                for mask in 0u32..(1 << n) {
                    if u64::from(mask.count_ones()) == k {
                        total += 1;
                        hit += u64::from(mask & ((1 << c) - 1) != 0);
                    }
                }
                let got = pass_at_k_exact(n, c, k).map_err(|e| e.to_string())?;
                ensure(got == ratio(hit, total), || format!("n={n} c={c} k={k}: {got} != {hit}/{total}"))?;
                cases += 1;
            }
        }
    }
    let path = manifest_dir().join("tests/fixtures/metrics/forty_tasks.json");
    let tasks: Vec<TaskResult> =
        serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let passing = tasks.iter().filter(|t| t.passing > 0).count();
    let m = RunMetrics::compute("fixture", tasks, &[1], BTreeMap::new()).map_err(|e| e.to_string())?;
    ensure(m.n_tasks == 40 && passing == 29, || format!("fixture has {} tasks, {passing} passing", m.n_tasks))?;
    ensure(m.pass_at_k[&1] == 0.725, || format!("fixture pass@1 = {}", m.pass_at_k[&1]))?;
    Ok(format!("{cases} cases equal enumeration exactly; 29/40 gives pass@1 = 0.725"))
}

fn build_dataset(seed: u64) -> Result<(BTreeMap<String, String>, DerivedDataset), String> {
    let culled = cull(&[common::corpus_dir("valid")], &BuiltinChecker).map_err(|e| e.to_string())?;
    let sources: BTreeMap<String, String> = culled
        .files
        .iter()
        .map(|(id, p)| std::fs::read_to_string(p).map(|t| (id.clone(), t)).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let ids: Vec<String> = sources.keys().cloned().collect();
    let manifest = split("mini", &ids, 0.95, seed, None).map_err(|e| e.to_string())?;
    let data = derive(&sources, &manifest, seed, &BuiltinChecker).map_err(|e| e.to_string())?;
    Ok((sources, data))
}

fn dataset_invariants() -> Verdict {
    let started = Instant::now();
    let (sources, data) = build_dataset(42)?;
    for r in &data.records {
        let original = &sources[&r.source_id];
        match r.kind {
            RecordKind::Completion => {
                ensure(format!("{}{}", r.input, r.target).as_bytes() == original.as_bytes(), || {
                    format!("{}: input + target differs from the source", r.id)
                })?
            }
            RecordKind::Fixing => {
                ensure(!check(&r.input).pass, || format!("{}: input passes check", r.id))?;
                ensure(check(&r.target).pass, || format!("{}: target fails check", r.id))?;
            }
            RecordKind::Generation => ensure(check(&r.input).pass, || format!("{}: input fails check", r.id))?,
        }
    }
    let serialize = |d: &DerivedDataset| serde_json::to_string(&d.records).expect("records serialize");
    let again = build_dataset(42)?.1;
    ensure(serialize(&data) == serialize(&again), || "same seed produced different records".into())?;
    let other = build_dataset(43)?.1;
    let changed = data.records.iter().zip(&other.records).filter(|(a, b)| a != b).count();
    ensure(changed >= 1, || "seed 43 changed no record".into())?;
    let took = within(Duration::from_secs(30), started)?;
    let count = |k| data.records.iter().filter(|r| r.kind == k).count();
    Ok(format!(
        "{} generation, {} completion, {} fixing records hold; rerun identical; seed 43 changes {changed}; {took:.2?}",
        count(RecordKind::Generation),
        count(RecordKind::Completion),
        count(RecordKind::Fixing)
    ))
}

fn diagnostic_lines(text: &str) -> Vec<String> {
    let re = regex::Regex::new(r"^[EW]\d{3}: .* at line \d+, column \d+$").expect("pattern compiles");
    text.lines().filter(|l| re.is_match(l)).map(str::to_string).collect()
}

fn single_error_policy() -> Verdict {
    let at = |line, column, code| Diagnostic {
        code,
        severity: Severity::Error,
        message: format!("fault at {line}:{column}"),
        line,
        column,
        offset: 0,
        hint: None,
    };
    // Report order deliberately differs from position order.
    let diags = vec![at(9, 2, Code::UnknownType), at(4, 7, Code::MissingTerminator), at(4, 3, Code::ExpectedToken)];
    let report = CheckReport { file_id: "p".into(), diagnostics: diags, error_count: 3, warning_count: 0, pass: false };
    let code = std::fs::read_to_string(common::corpus_dir("valid/blinker.st")).map_err(|e| e.to_string())?;
    let templates = TemplateSet::builtin();
    let prompt = |r: &CheckReport, code: &str| -> Result<String, String> {
        let messages = templates.render_fix_prompt_for(code, r).map_err(|e| e.to_string())?;
        Ok(messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n"))
    };
    let lines = diagnostic_lines(&prompt(&report, &code)?);
    ensure(lines == vec![report.diagnostics[2].to_string()], || format!("rendered {lines:?}"))?;

    let broken = "PROGRAM p\nVAR\n  a : INT;\n  b : BOOLEAN;\nEND_VAR\na := 1\nb := TRUE;\nIF a > 0 THN\n  a := 0;\nEND_IF;\nEND_PROGRAM\n";
    let real = check(broken);
    ensure(real.errors().count() >= 3, || format!("only {} errors:\n{}", real.errors().count(), real.render()))?;
    let min = real.errors().min_by_key(|d| (d.line, d.column)).expect("has errors").to_string();
    let lines = diagnostic_lines(&prompt(&real, broken)?);
    ensure(lines == vec![min.clone()], || format!("rendered {lines:?}, expected {min}"))?;
    Ok(format!("3-error reports render one line, the minimal one ({min})"))
}

fn pipeline_config() -> PipelineConfig {
    let mut c = PipelineConfig::new(stforge_core::gateway::BackendConfig::mock("unused"));
    c.verifier.enabled = false;
    c.skip_plan = true;
    c
}

fn convergence() -> Verdict {
    let input = PipelineInput::Spec("Implement the documented behaviour.".into());
    let fix_calls = |run: &stforge_core::pipeline::PipelineRun| {
        run.llm_calls().filter(|r| r.step == StepKind::Llm(Stage::FixSyntax)).count()
    };
    let mut runs = 0;
    for (id, original) in common::valid_sources() {
        let eligible = common::seedable_lines(&original);
        for k in 1..=3usize {
            if eligible.len() < k {
                continue;
            }
            // Spread the seeded lines over the file.
            let chosen: Vec<usize> = (0..k).map(|j| eligible[j * eligible.len() / k]).collect();
            let candidate = common::seed_errors(&original, &chosen);
            let gw = Gateway::new(common::perfect_fixer(original.clone(), candidate));
            let run = Pipeline::new(pipeline_config(), gw, None)
                .and_then(|p| p.run(&id, &input, 42))
                .map_err(|e| e.to_string())?;
            ensure(run.status == RunStatus::Accepted, || format!("{id} k={k}: {:?} {:?}", run.status, run.error))?;
            ensure(fix_calls(&run) <= k, || format!("{id} k={k}: {} fix rounds", fix_calls(&run)))?;
            runs += 1;
        }
    }
    let (_, original) = &common::valid_sources()[0];
    let candidate = common::seed_errors(original, &common::seedable_lines(original)[..1]);
    let cfg = pipeline_config();
    let budget = cfg.max_syntax_fix_iterations as usize;
    let run = Pipeline::new(cfg, Gateway::new(common::never_improves(candidate)), None)
        .and_then(|p| p.run("never", &input, 42))
        .map_err(|e| e.to_string())?;
    ensure(run.status == RunStatus::RejectedSyntaxBudget, || format!("never-improves ended {:?}", run.status))?;
    ensure(fix_calls(&run) == budget, || format!("{} fix calls, budget {budget}", fix_calls(&run)))?;
    let checks = run.check_reports().count();
    ensure(checks == budget + 1, || format!("{checks} CheckReports, expected {}", budget + 1))?;
    Ok(format!(
        "{runs} perfect-fixer runs accepted within k; never-improves stops after {budget} fixes with {checks} checks"
    ))
}

fn nuxmv_fixture(name: &str, ext: &str) -> Result<String, String> {
    std::fs::read_to_string(manifest_dir().join("tests/fixtures/nuxmv").join(format!("{name}.{ext}")))
        .map_err(|e| e.to_string())
}

fn verifier_parsing() -> Verdict {
    let classify = |name: &str| -> Result<stforge_core::verifier::VerificationReport, String> {
        let doc = SmvDocument::parse(&nuxmv_fixture(name, "smv")?).map_err(|e| e.to_string())?;
        Ok(parse_nuxmv_output_for(&nuxmv_fixture(name, "out")?, &doc))
    };
    let proven = classify("all_true")?;
    ensure(proven.overall == Outcome::Proven, || format!("all_true: {:?}", proven.overall))?;
    let refuted = classify("one_false")?;
    ensure(refuted.overall == Outcome::Refuted, || format!("one_false: {:?}", refuted.overall))?;
    let (_, trace) = refuted.counterexample().ok_or("one_false has no trace")?;
    let steps: Vec<u32> = trace.states.iter().map(|s| s.step).collect();
    ensure(!steps.is_empty() && steps.iter().zip(1..).all(|(&s, i)| s == i), || format!("trace steps {steps:?}"))?;
    let broken = classify("syntax_error")?;
    ensure(broken.overall == Outcome::ToolError, || format!("syntax_error: {:?}", broken.overall))?;

    // No deletion of a single line or suffix of the malformed output is proven.
    let raw = nuxmv_fixture("syntax_error", "out")?;
    let lines: Vec<&str> = raw.lines().collect();
    for skip in 0..lines.len() {
        let text: Vec<&str> = lines.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, l)| *l).collect();
        ensure(parse_nuxmv_output(&text.join("\n")).overall != Outcome::Proven, || {
            format!("dropping line {skip} proves")
        })?;
    }
    for cut in 0..=lines.len() {
        ensure(parse_nuxmv_output(&lines[..cut].join("\n")).overall != Outcome::Proven, || {
            format!("prefix {cut} proves")
        })?;
    }
    Ok(format!(
        "proven / refuted with a {}-state trace / tool_error; malformed output never proven",
        trace.states.len()
    ))
}

fn highbay() -> PathBuf {
    manifest_dir().join("tests/fixtures/replay/highbay")
}

fn replay_end_to_end() -> Verdict {
    let started = Instant::now();
    let spec = std::fs::read_to_string(highbay().join("spec.txt")).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut dirs = Vec::new();
    for side in ["a", "b"] {
        let mut cfg = PipelineConfig::load(&highbay().join("config.json")).map_err(|e| e.to_string())?;
        cfg.output_dir = tmp.path().join(side);
        let run = run_pipeline(&spec, &cfg).map_err(|e| e.to_string())?;
        ensure(run.status == RunStatus::Accepted, || format!("replay ended {:?}: {:?}", run.status, run.error))?;
        dirs.push(cfg.output_dir.join(&run.run_id));
    }
    let final_st = std::fs::read_to_string(dirs[0].join("final.st")).map_err(|e| e.to_string())?;
    ensure(check(&final_st).pass, || "final.st fails check".into())?;
    let mut names: Vec<String> = std::fs::read_dir(&dirs[0])
        .map_err(|e| e.to_string())?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    names.sort();
    let mut compared = 0;
    for name in names.iter().filter(|n| *n != "timings.json") {
        let a = std::fs::read(dirs[0].join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].join(name)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name} differs between replays"))?;
        compared += 1;
    }
    let took = within(Duration::from_secs(60), started)?;
    // The committed cache holds hand-authored replies, not a live model capture.
    Ok(format!("accepted twice, {compared} artifacts byte-identical, {took:.2?} (hand-authored replay cache)"))
}

/// Re-runs the verifier and replay criteria with the checker binary removed
/// from reach and every proxy pointed at a closed port.
fn offline_guarantee() -> Verdict {
    let empty = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::env::set_var("PATH", empty.path());
    std::env::remove_var(stforge_core::verifier::NUXMV_ENV);
    for var in ["HTTP_PROXY", "HTTPS_PROXY", "ALL_PROXY", "http_proxy", "https_proxy", "all_proxy"] {
        std::env::set_var(var, "http://127.0.0.1:9");
    }
    let doc = SmvDocument::parse(&nuxmv_fixture("all_true", "smv")?).map_err(|e| e.to_string())?;
    match (NuxmvVerifier { config: NuxmvConfig::default() }).verify(&doc) {
        Err(VerifierError::BinaryNotFound(_)) => {}
        other => return Err(format!("nuXmv still reachable: {other:?}")),
    }
    for entry in std::fs::read_dir(manifest_dir().join("tests/fixtures/replay")).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path().join("config.json");
        let cfg = PipelineConfig::load(&path).map_err(|e| e.to_string())?;
        ensure(cfg.backend.kind != BackendKind::RemoteApi, || format!("{} uses a remote backend", path.display()))?;
    }
    verifier_parsing()?;
    replay_end_to_end()?;
    Ok("verifier and replay criteria pass without nuXmv and with every proxy closed".into())
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 8] = [
        ("parser corpus gate", corpus_gate),
        ("pass@k oracle", pass_at_k_oracle),
        ("dataset invariants", dataset_invariants),
        ("single-error feedback", single_error_policy),
        ("pipeline convergence", convergence),
        ("verifier parsing", verifier_parsing),
        ("end-to-end replay", replay_end_to_end),
        ("offline guarantee", offline_guarantee),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {} {name}: {reason}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} acceptance criteria failed", criteria.len());
        std::process::exit(1);
    }
}
