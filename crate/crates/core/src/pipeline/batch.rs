use std::path::Path;

use rayon::prelude::*;

use super::{write_artifacts, HumanGate, Pipeline, PipelineError, PipelineInput, PipelineRun};
use crate::dataset::{describe_signatures, DatasetRecord, RecordKind, SplitManifest, SplitSide};
use crate::metrics::{compare_configs, MetricsSink, RunMetrics, SampleOutcome};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchTask {
    pub task_id: String,
    pub input: PipelineInput,
}

impl BatchTask {
    /// One task per `.txt` or `.md` file of `dir`, named by file stem.
    pub fn specs_from_dir(dir: &Path) -> Result<Vec<BatchTask>, PipelineError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| PipelineError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt" || e == "md"))
            .collect();
        paths.sort();
        paths
            .into_iter()
            .map(|p| {
                let text = std::fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
                let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                Ok(BatchTask { task_id: id, input: PipelineInput::Spec(text) })
            })
            .collect()
    }

    /// Tasks from the test side of a derived dataset. Generation records
    /// become specs built from the interface description.
    pub fn from_records(records: &[DatasetRecord], manifest: &SplitManifest) -> Vec<BatchTask> {
        records
            .iter()
            .filter(|r| manifest.side_of(&r.source_id) == Some(SplitSide::Test))
            .map(|r| BatchTask {
                task_id: r.id.clone(),
                input: match r.kind {
                    RecordKind::Generation => PipelineInput::Spec(describe_signatures(&r.input)),
                    RecordKind::Completion => PipelineInput::Completion(r.input.clone()),
                    RecordKind::Fixing => PipelineInput::Fixing(r.input.clone()),
                },
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchOptions {
    /// Configuration label in the metrics and comparison tables.
    pub label: String,
    /// Samples drawn per task; sample `i` runs with seed `config.seed + i`.
    pub samples: u32,
    /// Concurrent runs; 0 uses one per core.
    pub jobs: usize,
    /// pass@k values to report besides k = 1. Each must be at most `samples`.
    pub ks: Vec<u64>,
    /// Write each run under `output_dir/<run id>/`.
    pub write_artifacts: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions { label: "batch".into(), samples: 1, jobs: 0, ks: vec![1], write_artifacts: true }
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    /// Sorted by run id.
    pub runs: Vec<PipelineRun>,
    pub metrics: RunMetrics,
}

/// Runs every task `samples` times, concurrently up to `jobs`. A failed run
/// counts as a non-pass and the batch goes on.
pub fn run_batch(pipeline: &Pipeline, tasks: &[BatchTask], opts: &BatchOptions) -> Result<BatchResult, PipelineError> {
    if tasks.is_empty() {
        return Err(PipelineError::EmptyInput("batch has no tasks"));
    }
    if opts.samples == 0 {
        return Err(PipelineError::Config("samples must be at least 1".into()));
    }
    if let Some(k) = opts.ks.iter().find(|&&k| k == 0 || k > u64::from(opts.samples)) {
        return Err(PipelineError::Config(format!("pass@{k} needs 1 <= k <= samples ({})", opts.samples)));
    }
    if pipeline.config.human_gate != HumanGate::Off {
        return Err(PipelineError::Config("the human gate is not available in batch mode".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(t) = tasks.iter().find(|t| !seen.insert(&t.task_id)) {
        return Err(PipelineError::Config(format!("duplicate task id '{}'", t.task_id)));
    }

    let jobs: Vec<(&BatchTask, u32)> = tasks.iter().flat_map(|t| (0..opts.samples).map(move |i| (t, i))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| PipelineError::Config(format!("cannot start worker pool: {e}")))?;
    let sink = MetricsSink::new();
    let results: Vec<Result<PipelineRun, PipelineError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(task, sample)| {
                let run_id =
                    if opts.samples == 1 { task.task_id.clone() } else { format!("{}-{sample:03}", task.task_id) };
                let run = pipeline.run(&run_id, &task.input, pipeline.config.seed.wrapping_add(u64::from(sample)))?;
                if opts.write_artifacts {
                    write_artifacts(&run, &pipeline.config.output_dir.join(&run.run_id))?;
                }
                sink.append(SampleOutcome {
                    run_id: run.run_id.clone(),
                    task_id: task.task_id.clone(),
                    passed: run.is_accepted(),
                    error_count: run.final_check.as_ref().map(|r| r.error_count),
                    iterations: run.fix_iterations.clone(),
                });
                Ok(run)
            })
            .collect()
    });
    let mut runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    runs.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    let metrics = sink.finalize(&opts.label, &opts.ks).map_err(|e| PipelineError::Config(format!("metrics: {e}")))?;
    Ok(BatchResult { runs, metrics })
}

/// Writes `metrics.json` and a one-row `metrics.csv` comparison table.
pub fn write_batch_metrics(metrics: &RunMetrics, dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let json = dir.join("metrics.json");
    let text = serde_json::to_string_pretty(metrics).expect("metrics serialize") + "\n";
    std::fs::write(&json, text).map_err(|e| PipelineError::io(&json, e))?;
    let table = compare_configs(std::slice::from_ref(metrics), None)
        .map_err(|e| PipelineError::Config(format!("metrics: {e}")))?;
    let csv = dir.join("metrics.csv");
    std::fs::write(&csv, table.to_csv()).map_err(|e| PipelineError::io(&csv, e))
}
