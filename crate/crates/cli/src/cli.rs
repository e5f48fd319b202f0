use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Structured Text generation, checking and evaluation toolchain.
#[derive(Debug, Parser)]
#[command(name = "stforge", version, about)]
pub struct Cli {
    /// Seed for every randomized step. Overrides the config file; the
    /// built-in default is 42.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress progress output. Errors are still reported.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    /// More log output; repeat for debug detail.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Allow writing into a non-empty output location.
    #[arg(long, global = true)]
    pub force: bool,
    /// Maximum concurrent runs or files; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check Structured Text files for syntax and scope errors.
    Check(CheckArgs),
    /// Build the fine-tuning datasets from a corpus.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Run the generation pipeline on one specification.
    Run(RunArgs),
    /// Run the pipeline over many tasks and compute metrics.
    Batch(BatchArgs),
    /// Compare metrics of several configurations.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckerKind {
    Builtin,
    Matiec,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Structured Text sources to check.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Print CheckReports as JSON on standard output.
    #[arg(long)]
    pub json: bool,
    /// Built-in frontend, or an external iec2c.
    #[arg(long, value_enum, default_value_t = CheckerKind::Builtin)]
    pub checker: CheckerKind,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Keep the corpus files that pass the checker.
    Cull(CullArgs),
    /// Assign kept files to train and test sides.
    Split(SplitArgs),
    /// Derive generation, completion and fixing records.
    Derive(DeriveArgs),
    /// Write one record kind of one side as JSONL prompt/completion pairs.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct CullArgs {
    /// Corpus directory; may be repeated.
    #[arg(long = "corpus", required = true)]
    pub corpus: Vec<PathBuf>,
    /// Output JSON with kept ids, file paths and rejections.
    #[arg(long)]
    pub out: PathBuf,
    /// Checker that decides which files are kept.
    #[arg(long, value_enum, default_value_t = CheckerKind::Builtin)]
    pub checker: CheckerKind,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Output of `dataset cull`.
    #[arg(long)]
    pub cull: PathBuf,
    /// Manifest JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of files assigned to training.
    #[arg(long, default_value_t = 0.95)]
    pub ratio: f64,
    /// Exact test-side size, overriding the ratio.
    #[arg(long)]
    pub test_count: Option<usize>,
    /// Name recorded in the manifest.
    #[arg(long, default_value = "corpus")]
    pub corpus_id: String,
}

#[derive(Debug, Args)]
pub struct DeriveArgs {
    /// Output of `dataset cull`.
    #[arg(long)]
    pub cull: PathBuf,
    /// Output of `dataset split`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Dataset directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Checker used to confirm that fixing inputs fail and targets pass.
    #[arg(long, value_enum, default_value_t = CheckerKind::Builtin)]
    pub checker: CheckerKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Generation,
    Completion,
    Fixing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Output of `dataset derive`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Record kind to export.
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Split side to export.
    #[arg(long, value_enum, default_value_t = SideArg::Train)]
    pub side: SideArg,
    /// JSONL file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShotArg {
    ZeroShot,
    OneShot,
}

/// Settings shared by `run` and `batch`. Each flag overrides the config file.
#[derive(Debug, Args)]
pub struct PipelineFlags {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, replacing the configured one.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Whether prompts carry a worked example.
    #[arg(long, value_enum)]
    pub shot_mode: Option<ShotArg>,
    /// Generate without a design plan.
    #[arg(long)]
    pub skip_plan: bool,
    /// Disable model checking.
    #[arg(long)]
    pub no_verify: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Natural-language specification file.
    #[arg(long)]
    pub spec: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    /// Pause after each stage for approval.
    #[arg(long)]
    pub human_gate: bool,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    /// Directory of specification files (`*.txt`, `*.md`).
    #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
    pub specs: Option<PathBuf>,
    /// Dataset directory; its test side becomes the task list.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Restrict dataset tasks to one record kind.
    #[arg(long, value_enum, requires = "dataset")]
    pub kind: Option<KindArg>,
    /// Samples per task.
    #[arg(long, default_value_t = 1)]
    pub samples: u32,
    /// Extra pass@k values; k = 1 is always reported.
    #[arg(long = "k")]
    pub ks: Vec<u64>,
    /// Configuration label used in the metrics.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `metrics.json` files written by `batch`.
    #[arg(required = true)]
    pub metrics: Vec<PathBuf>,
    /// Expert ratings keyed by configuration label.
    #[arg(long)]
    pub expert: Option<PathBuf>,
    /// Output format of the comparison table.
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
    /// Write the table to a file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
