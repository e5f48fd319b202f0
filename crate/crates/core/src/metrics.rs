//! pass@k, compiler error rates and configuration comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Mutex;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};
use serde::{Deserialize, Serialize};
use stforge_st::CheckReport;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("invalid pass@k arguments n={n}, c={c}, k={k}: {reason}")]
    InvalidArguments { n: u64, c: u64, k: u64, reason: &'static str },
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("duplicate configuration label '{0}'")]
    DuplicateLabel(String),
    #[error("malformed report data: {0}")]
    Format(String),
}

/// Number types `pass_at_k` can be evaluated in.
pub trait Scalar: Num + Clone {
    fn from_count(n: u64) -> Self;
}

impl Scalar for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }
}

impl Scalar for BigRational {
    fn from_count(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
}

/// Exact rational scalar.
pub type Exact = BigRational;

/// Unbiased pass@k estimate `1 - C(n-c, k) / C(n, k)` in product form:
/// `1 - prod_{i = n-c+1}^{n} (1 - k / i)`. No factorial is formed, so large
/// `n` neither overflows nor loses precision to cancellation.
pub fn pass_at_k<T: Scalar>(n: u64, c: u64, k: u64) -> Result<T, MetricsError> {
    let invalid = |reason| Err(MetricsError::InvalidArguments { n, c, k, reason });
    if k == 0 {
        return invalid("k must be at least 1");
    }
    if k > n {
        return invalid("k exceeds the number of samples");
    }
    if c > n {
        return invalid("more passing samples than samples");
    }
    if n - c < k {
        return Ok(T::one());
    }
    let kk = T::from_count(k);
    let mut fail = T::one();
    for i in (n - c + 1)..=n {
        let i = T::from_count(i);
        fail = fail * ((i.clone() - kk.clone()) / i);
    }
    Ok(T::one() - fail)
}

pub fn pass_at_k_f64(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    pass_at_k::<f64>(n, c, k)
}

pub fn pass_at_k_exact(n: u64, c: u64, k: u64) -> Result<Exact, MetricsError> {
    pass_at_k::<Exact>(n, c, k)
}

/// Mean `error_count` per file.
pub fn error_rate(reports: &[CheckReport]) -> Result<f64, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::Empty("report list"));
    }
    let total: usize = reports.iter().map(|r| r.error_count).sum();
    Ok(total as f64 / reports.len() as f64)
}

/// Samples drawn and passing for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub samples: u64,
    pub passing: u64,
    /// Compiler error count of each sample's final code.
    pub error_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub label: String,
    pub n_tasks: usize,
    pub tasks: Vec<TaskResult>,
    /// k -> mean pass@k over tasks.
    pub pass_at_k: BTreeMap<u64, f64>,
    pub total_errors: u64,
    pub files: u64,
    pub mean_errors: f64,
    /// Stage name -> (fix iterations used -> number of runs).
    #[serde(default)]
    pub iteration_histogram: BTreeMap<String, BTreeMap<u32, u64>>,
}

impl RunMetrics {
    /// Aggregates per-task results. k = 1 is always reported.
    pub fn compute(
        label: &str,
        tasks: Vec<TaskResult>,
        ks: &[u64],
        iteration_histogram: BTreeMap<String, BTreeMap<u32, u64>>,
    ) -> Result<RunMetrics, MetricsError> {
        if tasks.is_empty() {
            return Err(MetricsError::Empty("task list"));
        }
        let mut ks: Vec<u64> = ks.to_vec();
        ks.push(1);
        ks.sort_unstable();
        ks.dedup();
        let mut pass = BTreeMap::new();
        for &k in &ks {
            let mut sum = Exact::from_count(0);
            for t in &tasks {
                sum += pass_at_k_exact(t.samples, t.passing, k)?;
            }
            let mean = sum / Exact::from_count(tasks.len() as u64);
            pass.insert(k, mean.to_f64().unwrap_or(f64::NAN));
        }
        let files: u64 = tasks.iter().map(|t| t.error_counts.len() as u64).sum();
        let total_errors: u64 = tasks.iter().flat_map(|t| &t.error_counts).map(|&e| e as u64).sum();
        Ok(RunMetrics {
            label: label.to_string(),
            n_tasks: tasks.len(),
            tasks,
            pass_at_k: pass,
            total_errors,
            files,
            mean_errors: if files == 0 { 0.0 } else { total_errors as f64 / files as f64 },
            iteration_histogram,
        })
    }
}

/// One finished sample, as reported by a concurrent batch worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleOutcome {
    pub run_id: String,
    pub task_id: String,
    pub passed: bool,
    /// Compiler errors in the sample's final code; `None` when the run
    /// produced no code at all.
    pub error_count: Option<usize>,
    /// Stage name -> fix iterations used.
    pub iterations: BTreeMap<String, u32>,
}

/// Collects outcomes from concurrent runs. The order of appends does not
/// matter: `finalize` sorts by run id.
#[derive(Debug, Default)]
pub struct MetricsSink {
    outcomes: Mutex<Vec<SampleOutcome>>,
}

impl MetricsSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&self, outcome: SampleOutcome) {
        self.outcomes.lock().unwrap_or_else(|e| e.into_inner()).push(outcome);
    }

    pub fn finalize(self, label: &str, ks: &[u64]) -> Result<RunMetrics, MetricsError> {
        let mut outcomes = self.outcomes.into_inner().unwrap_or_else(|e| e.into_inner());
        outcomes.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        let mut tasks: BTreeMap<String, TaskResult> = BTreeMap::new();
        let mut histogram: BTreeMap<String, BTreeMap<u32, u64>> = BTreeMap::new();
        for o in outcomes {
            let t = tasks.entry(o.task_id.clone()).or_insert_with(|| TaskResult {
                task_id: o.task_id.clone(),
                samples: 0,
                passing: 0,
                error_counts: Vec::new(),
            });
            t.samples += 1;
            t.passing += u64::from(o.passed);
            t.error_counts.extend(o.error_count);
            for (stage, n) in o.iterations {
                *histogram.entry(stage).or_default().entry(n).or_default() += 1;
            }
        }
        RunMetrics::compute(label, tasks.into_values().collect(), ks, histogram)
    }
}

/// Expert ratings per configuration, imported from a JSON file of the form
/// `{"<label>": {"correctness": 7.5, "maintainability": 6.0, "conformance": 8.0}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertScore {
    pub correctness: f64,
    pub maintainability: f64,
    pub conformance: f64,
}

pub type ExpertScores = BTreeMap<String, ExpertScore>;

pub fn load_expert_scores(path: &Path) -> Result<ExpertScores, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|e| MetricsError::Format(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| MetricsError::Format(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub n_tasks: usize,
    pub pass_at_1: f64,
    pub mean_errors: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert: Option<ExpertScore>,
}

/// Rows in input order. Pass rate and error rate stay separate columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_configs(metrics: &[RunMetrics], scores: Option<&ExpertScores>) -> Result<ComparisonTable, MetricsError> {
    if metrics.is_empty() {
        return Err(MetricsError::Empty("metrics list"));
    }
    let mut rows: Vec<ComparisonRow> = Vec::with_capacity(metrics.len());
    for m in metrics {
        if rows.iter().any(|r| r.label == m.label) {
            return Err(MetricsError::DuplicateLabel(m.label.clone()));
        }
        rows.push(ComparisonRow {
            label: m.label.clone(),
            n_tasks: m.n_tasks,
            pass_at_1: m.pass_at_k.get(&1).copied().unwrap_or(f64::NAN),
            mean_errors: m.mean_errors,
            expert: scores.and_then(|s| s.get(&m.label)).copied(),
        });
    }
    Ok(ComparisonTable { rows })
}

const CSV_HEADER: [&str; 7] =
    ["label", "n_tasks", "pass_at_1", "mean_errors", "correctness", "maintainability", "conformance"];

impl ComparisonTable {
    pub fn to_text(&self) -> String {
        let with_expert = self.rows.iter().any(|r| r.expert.is_some());
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max("config".len());
        let mut out = format!("{:<width$}  {:>7}  {:>9}  {:>11}", "config", "tasks", "pass@1", "mean errors");
        if with_expert {
            out.push_str("  correctness  maintainability  conformance");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:<width$}  {:>7}  {:>9.4}  {:>11.4}", r.label, r.n_tasks, r.pass_at_1, r.mean_errors);
            if with_expert {
                match &r.expert {
                    Some(e) => {
                        let _ = write!(
                            out,
                            "  {:>11.2}  {:>15.2}  {:>11.2}",
                            e.correctness, e.maintainability, e.conformance
                        );
                    }
                    None => out.push_str(&format!("  {:>11}  {:>15}  {:>11}", "-", "-", "-")),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Plot-ready CSV. Floats use the shortest representation that parses
    /// back to the same value, so `from_csv(to_csv())` is lossless.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in &self.rows {
            let e = |f: fn(&ExpertScore) -> f64| r.expert.as_ref().map(|s| f(s).to_string()).unwrap_or_default();
            w.write_record([
                r.label.clone(),
                r.n_tasks.to_string(),
                r.pass_at_1.to_string(),
                r.mean_errors.to_string(),
                e(|s| s.correctness),
                e(|s| s.maintainability),
                e(|s| s.conformance),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    pub fn from_csv(text: &str) -> Result<ComparisonTable, MetricsError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| MetricsError::Format(e.to_string()))?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(MetricsError::Format("unexpected CSV header".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| MetricsError::Format(format!("'{s}': {e}")));
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| MetricsError::Format(e.to_string()))?;
            let expert = if rec[4].is_empty() {
                None
            } else {
                Some(ExpertScore {
                    correctness: num(&rec[4])?,
                    maintainability: num(&rec[5])?,
                    conformance: num(&rec[6])?,
                })
            };
            rows.push(ComparisonRow {
                label: rec[0].to_string(),
                n_tasks: rec[1].parse().map_err(|e| MetricsError::Format(format!("n_tasks: {e}")))?,
                pass_at_1: num(&rec[2])?,
                mean_errors: num(&rec[3])?,
                expert,
            });
        }
        Ok(ComparisonTable { rows })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}
