use std::collections::BTreeMap;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use stforge_core::checker::{BuiltinChecker, Checker, CheckerError, MatiecChecker};
use stforge_core::dataset::{self, CullResult, DatasetError, RecordKind, SplitManifest, SplitSide};
use stforge_core::gateway::{BackendKind, Gateway, GatewayError};
use stforge_core::metrics::{compare_configs, load_expert_scores, RunMetrics};
use stforge_core::pipeline::{
    run_batch, run_id_for, write_artifacts, write_batch_metrics, BatchOptions, BatchTask, HumanGate, Pipeline,
    PipelineConfig, PipelineError, PipelineInput, RunStatus, VerifierKind, RUN_FILE,
};
use stforge_core::prompting::{ShotMode, TemplateSet};
use stforge_core::verifier::{VerifierError, NUXMV_ENV};
use stforge_st::{CheckReport, Severity};

use crate::cli::{
    BatchArgs, CheckArgs, CheckerKind, Cli, CullArgs, DeriveArgs, ExportArgs, KindArg, PipelineFlags, ReportArgs,
    ReportFormat, RunArgs, ShotArg, SideArg, SplitArgs,
};
use crate::operator::ConsoleOperator;
use crate::{Failure, Outcome};

const DEFAULT_SEED: u64 = stforge_core::pipeline::DEFAULT_SEED;

fn progress(cli: &Cli, msg: impl AsRef<str>) {
    if !cli.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn require_input(path: &Path) -> Outcome {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{} does not exist", path.display())))
    }
}

fn require_fresh_file(cli: &Cli, path: &Path) -> Outcome {
    if path.exists() && !cli.force {
        return Err(Failure::Usage(format!("{} already exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

fn is_nonempty_dir(path: &Path) -> bool {
    std::fs::read_dir(path).map(|mut d| d.next().is_some()).unwrap_or(false)
}

fn require_fresh_dir(cli: &Cli, path: &Path) -> Outcome {
    if is_nonempty_dir(path) && !cli.force {
        return Err(Failure::Usage(format!("{} is not empty; pass --force to write into it", path.display())));
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Outcome {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| Failure::Environment(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::Environment(format!("cannot write {}: {e}", path.display())))
}

fn checker_for(kind: CheckerKind) -> Box<dyn Checker> {
    match kind {
        CheckerKind::Builtin => Box::new(BuiltinChecker),
        CheckerKind::Matiec => Box::new(MatiecChecker::default()),
    }
}

fn checker_failure(e: CheckerError) -> Failure {
    Failure::Environment(e.to_string())
}

fn dataset_failure(e: DatasetError) -> Failure {
    match e {
        DatasetError::Io { .. } => Failure::Environment(e.to_string()),
        DatasetError::Checker(c) => checker_failure(c),
        other => Failure::Usage(other.to_string()),
    }
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::Io { .. } => Failure::Environment(e.to_string()),
        PipelineError::Gateway(GatewayError::Config(_) | GatewayError::InvalidRequest(_)) => {
            Failure::Usage(e.to_string())
        }
        PipelineError::Gateway(_) => Failure::Environment(e.to_string()),
        PipelineError::Verifier(VerifierError::BinaryNotFound(_)) => Failure::Environment(e.to_string()),
        other => Failure::Usage(other.to_string()),
    }
}

fn severity(s: Severity) -> &'static str {
    match s {
        Severity::Error => "error",
        Severity::Warning => "warning",
    }
}

pub fn check(cli: &Cli, args: &CheckArgs) -> Outcome {
    let checker = checker_for(args.checker);
    let mut reports: Vec<CheckReport> = Vec::new();
    for path in &args.files {
        require_input(path)?;
        let source = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        reports.push(checker.check(&path.display().to_string(), &source).map_err(checker_failure)?);
    }
    if args.json {
        let json = match reports.as_slice() {
            [one] => serde_json::to_string_pretty(one),
            many => serde_json::to_string_pretty(many),
        }
        .expect("reports serialize");
        println!("{json}");
    } else {
        for r in &reports {
            for d in &r.diagnostics {
                println!("{}:{}:{}: {}[{}]: {}", r.file_id, d.line, d.column, severity(d.severity), d.code, d.message);
            }
        }
        let failed = reports.iter().filter(|r| !r.pass).count();
        if reports.len() > 1 {
            progress(cli, format!("{} of {} files passed", reports.len() - failed, reports.len()));
        }
    }
    if reports.iter().all(|r| r.pass) {
        Ok(())
    } else {
        Err(Failure::Silent(1))
    }
}

pub fn cull(cli: &Cli, args: &CullArgs) -> Outcome {
    for d in &args.corpus {
        require_input(d)?;
    }
    require_fresh_file(cli, &args.out)?;
    let checker = checker_for(args.checker);
    let result = dataset::cull(&args.corpus, checker.as_ref()).map_err(dataset_failure)?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    write_file(&args.out, &(serde_json::to_string_pretty(&result).expect("cull result serializes") + "\n"))?;
    progress(cli, format!("kept {} files, rejected {}", result.kept.len(), result.rejected.len()));
    for r in &result.rejected {
        progress(cli, format!("  rejected {}: {}", r.file_id, r.first_diagnostic));
    }
    Ok(())
}

fn read_cull(path: &Path) -> Result<CullResult, Failure> {
    require_input(path)?;
    dataset::read_json(path).map_err(|e| Failure::Usage(e.to_string()))
}

pub fn split(cli: &Cli, args: &SplitArgs) -> Outcome {
    let culled = read_cull(&args.cull)?;
    require_fresh_file(cli, &args.out)?;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let manifest =
        dataset::split(&args.corpus_id, &culled.kept, args.ratio, seed, args.test_count).map_err(dataset_failure)?;
    write_file(&args.out, &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"))?;
    progress(cli, format!("{} train / {} test", manifest.train_count, manifest.test_count));
    Ok(())
}

pub fn derive(cli: &Cli, args: &DeriveArgs) -> Outcome {
    let culled = read_cull(&args.cull)?;
    require_input(&args.manifest)?;
    let manifest: SplitManifest = dataset::read_json(&args.manifest).map_err(|e| Failure::Usage(e.to_string()))?;
    require_fresh_dir(cli, &args.out)?;
    if cli.force && args.out.join("records").is_dir() {
        std::fs::remove_dir_all(args.out.join("records"))
            .map_err(|e| Failure::Environment(format!("cannot clear {}: {e}", args.out.display())))?;
    }
    let mut sources = BTreeMap::new();
    for (id, path) in &culled.files {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        sources.insert(id.clone(), text);
    }
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let checker = checker_for(args.checker);
    let pool = rayon_pool(cli.jobs)?;
    let data =
        pool.install(|| dataset::derive(&sources, &manifest, seed, checker.as_ref())).map_err(dataset_failure)?;
    let violations = dataset::verify_records(&data.records, &sources, checker.as_ref()).map_err(dataset_failure)?;
    if let Some(v) = violations.first() {
        return Err(Failure::Domain(format!("record {} violates its kind invariant: {}", v.record_id, v.reason)));
    }
    dataset::write_dataset(&args.out, &data).map_err(dataset_failure)?;
    progress(cli, format!("{} records, {} skipped", data.records.len(), data.skipped.len()));
    Ok(())
}

fn rayon_pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Environment(format!("cannot start worker pool: {e}")))
}

fn record_kind(k: KindArg) -> RecordKind {
    match k {
        KindArg::Generation => RecordKind::Generation,
        KindArg::Completion => RecordKind::Completion,
        KindArg::Fixing => RecordKind::Fixing,
    }
}

pub fn export(cli: &Cli, args: &ExportArgs) -> Outcome {
    require_input(&args.dataset)?;
    require_fresh_file(cli, &args.out)?;
    let data = dataset::read_dataset(&args.dataset).map_err(|e| Failure::Usage(e.to_string()))?;
    let kind = record_kind(args.kind);
    let side = match args.side {
        SideArg::Train => SplitSide::Train,
        SideArg::Test => SplitSide::Test,
    };
    let records: Vec<_> = data
        .records
        .into_iter()
        .filter(|r| r.kind == kind && data.manifest.side_of(&r.source_id) == Some(side))
        .collect();
    let text =
        dataset::export_finetune(&records, &data.manifest, side, &TemplateSet::builtin()).map_err(dataset_failure)?;
    write_file(&args.out, &text)?;
    progress(cli, format!("exported {} {} records", records.len(), kind.as_str()));
    Ok(())
}

fn load_config(cli: &Cli, flags: &PipelineFlags) -> Result<PipelineConfig, Failure> {
    require_input(&flags.config)?;
    let mut cfg = PipelineConfig::load(&flags.config).map_err(pipeline_failure)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &flags.output {
        cfg.output_dir = out.clone();
    }
    if let Some(mode) = flags.shot_mode {
        cfg.shot_mode = match mode {
            ShotArg::ZeroShot => ShotMode::ZeroShot,
            ShotArg::OneShot => ShotMode::OneShot,
        };
    }
    if flags.skip_plan {
        cfg.skip_plan = true;
    }
    if flags.no_verify {
        cfg.verifier.enabled = false;
    }
    cfg.validate().map_err(pipeline_failure)?;
    Ok(cfg)
}

/// Resolves a program name against the search path.
fn find_program(program: &Path) -> Option<PathBuf> {
    if program.components().count() > 1 {
        return program.is_file().then(|| program.to_path_buf());
    }
    std::env::split_paths(&std::env::var_os("PATH")?).map(|d| d.join(program)).find(|p| p.is_file())
}

fn build_pipeline(cfg: PipelineConfig) -> Result<Pipeline, Failure> {
    cfg.backend.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if cfg.verifier.enabled && cfg.verifier.kind == VerifierKind::Nuxmv {
        let nuxmv = stforge_core::verifier::NuxmvConfig {
            binary: cfg.verifier.binary.clone(),
            timeout_secs: cfg.verifier.timeout_secs,
            engine: cfg.verifier.engine,
        };
        let binary = nuxmv.resolved_binary();
        if find_program(&binary).is_none() {
            return Err(Failure::Environment(format!(
                "model checker '{}' not found; install nuXmv, set {NUXMV_ENV}, or disable verification",
                binary.display()
            )));
        }
    }
    let gateway = Gateway::from_config(&cfg.backend).map_err(|e| match cfg.backend.kind {
        BackendKind::RemoteApi => Failure::Environment(e.to_string()),
        _ => Failure::Usage(e.to_string()),
    })?;
    let verifier = cfg.verifier.build().map_err(pipeline_failure)?;
    Pipeline::new(cfg, gateway, verifier).map_err(pipeline_failure)
}

fn clear_dir(path: &Path) -> Outcome {
    if path.exists() {
        std::fs::remove_dir_all(path)
            .map_err(|e| Failure::Environment(format!("cannot clear {}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn run(cli: &Cli, args: &RunArgs) -> Outcome {
    require_input(&args.spec)?;
    let spec = std::fs::read_to_string(&args.spec)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", args.spec.display())))?;
    let mut cfg = load_config(cli, &args.pipeline)?;
    if args.human_gate {
        cfg.human_gate = HumanGate::ConfirmEachStage;
    }
    let gated = cfg.human_gate == HumanGate::ConfirmEachStage;
    if gated && !std::io::stdin().is_terminal() {
        return Err(Failure::Usage("the human gate needs an interactive terminal on standard input".into()));
    }
    let input = PipelineInput::Spec(spec);
    let run_id = run_id_for(&input, &cfg, cfg.seed);
    let dir = cfg.output_dir.join(&run_id);
    require_fresh_dir(cli, &dir)?;
    let seed = cfg.seed;
    let mut pipeline = build_pipeline(cfg)?;
    if gated {
        pipeline = pipeline.with_operator(Arc::new(ConsoleOperator));
    }
    progress(cli, format!("{run_id}: running with {}", pipeline.gateway().backend_id()));
    let run = pipeline.run(&run_id, &input, seed).map_err(pipeline_failure)?;
    if cli.force {
        clear_dir(&dir)?;
    }
    write_artifacts(&run, &dir).map_err(pipeline_failure)?;
    if !cli.quiet {
        let fixes: Vec<String> = run.fix_iterations.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{}: {} ({}) -> {}", run.run_id, run.status.as_str(), fixes.join(", "), dir.display());
    }
    match run.status {
        RunStatus::Accepted => Ok(()),
        RunStatus::BackendFailure => Err(Failure::Environment(run.error.unwrap_or_else(|| "backend failure".into()))),
        _ => Err(Failure::Silent(1)),
    }
}

pub fn batch(cli: &Cli, args: &BatchArgs) -> Outcome {
    let cfg = load_config(cli, &args.pipeline)?;
    if cfg.human_gate != HumanGate::Off {
        return Err(Failure::Usage("the human gate is not available in batch mode".into()));
    }
    let tasks = match (&args.specs, &args.dataset) {
        (Some(dir), _) => {
            require_input(dir)?;
            BatchTask::specs_from_dir(dir).map_err(pipeline_failure)?
        }
        (None, Some(dir)) => {
            require_input(dir)?;
            let data = dataset::read_dataset(dir).map_err(|e| Failure::Usage(e.to_string()))?;
            let records: Vec<_> = match args.kind {
                Some(k) => data.records.into_iter().filter(|r| r.kind == record_kind(k)).collect(),
                None => data.records,
            };
            BatchTask::from_records(&records, &data.manifest)
        }
        (None, None) => return Err(Failure::Usage("pass --specs or --dataset".into())),
    };
    if tasks.is_empty() {
        return Err(Failure::Usage("no tasks to run".into()));
    }
    let out = cfg.output_dir.clone();
    require_fresh_dir(cli, &out)?;
    if cli.force {
        clear_previous_runs(&out)?;
    }
    let label = args.label.clone().unwrap_or_else(|| {
        args.pipeline.config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "batch".into())
    });
    let opts =
        BatchOptions { label, samples: args.samples, jobs: cli.jobs, ks: args.ks.clone(), write_artifacts: true };
    let pipeline = build_pipeline(cfg)?;
    progress(cli, format!("running {} tasks x {} samples", tasks.len(), args.samples));
    let result = run_batch(&pipeline, &tasks, &opts).map_err(pipeline_failure)?;
    for r in &result.runs {
        progress(cli, format!("  {}: {}", r.run_id, r.status.as_str()));
    }
    write_batch_metrics(&result.metrics, &out).map_err(pipeline_failure)?;
    if !cli.quiet {
        let table =
            compare_configs(std::slice::from_ref(&result.metrics), None).map_err(|e| Failure::Usage(e.to_string()))?;
        print!("{}", table.to_text());
    }
    Ok(())
}

/// Removes run directories and metrics left by an earlier batch, and
/// nothing else.
fn clear_previous_runs(dir: &Path) -> Outcome {
    let Ok(entries) = std::fs::read_dir(dir) else { return Ok(()) };
    for e in entries.flatten() {
        let p = e.path();
        if p.is_dir() && p.join(RUN_FILE).is_file() {
            clear_dir(&p)?;
        }
    }
    for f in ["metrics.json", "metrics.csv"] {
        let p = dir.join(f);
        if p.is_file() {
            std::fs::remove_file(&p)
                .map_err(|e| Failure::Environment(format!("cannot remove {}: {e}", p.display())))?;
        }
    }
    Ok(())
}

pub fn report(cli: &Cli, args: &ReportArgs) -> Outcome {
    let mut all = Vec::new();
    for p in &args.metrics {
        require_input(p)?;
        let text =
            std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?;
        let m: RunMetrics = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
        all.push(m);
    }
    let scores = match &args.expert {
        Some(p) => {
            require_input(p)?;
            Some(load_expert_scores(p).map_err(|e| Failure::Usage(e.to_string()))?)
        }
        None => None,
    };
    let table = compare_configs(&all, scores.as_ref()).map_err(|e| Failure::Usage(e.to_string()))?;
    let text = match args.format {
        ReportFormat::Text => table.to_text(),
        ReportFormat::Csv => table.to_csv(),
        ReportFormat::Json => table.to_json(),
    };
    match &args.out {
        Some(path) => {
            require_fresh_file(cli, path)?;
            write_file(path, &text)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
