//! Corpus culling, train/test splitting and synthesis of the generation,
//! completion and fixing datasets.
//!
//! Every operation is a pure function of its inputs and seed. Randomness
//! comes from a ChaCha stream seeded per file, so derivations are
//! independent of processing order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stforge_st::ast::{walk_statements, VarKind};
use stforge_st::{parse_source, tokenize, TokenKind};
use thiserror::Error;

use crate::checker::{Checker, CheckerError};
use crate::prompting::{flatten, PromptError, TemplateSet};

/// Removals tried before a file is reported as unbreakable.
pub const MAX_FIXING_REMOVALS: usize = 50;
/// Files with fewer statements yield no completion record.
pub const MIN_COMPLETION_STATEMENTS: usize = 5;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("file id '{0}' occurs in more than one corpus directory")]
    DuplicateId(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid export: {0}")]
    InvalidExport(String),
    #[error(transparent)]
    Checker(#[from] CheckerError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl DatasetError {
    fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        DatasetError::Io { path: path.display().to_string(), reason: err.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Generation,
    Completion,
    Fixing,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Generation => "generation",
            RecordKind::Completion => "completion",
            RecordKind::Fixing => "fixing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSide {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedLine {
    /// 1-based line number in the original file.
    pub line: usize,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub kind: RecordKind,
    pub source_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSide>,
    pub input: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mutation_log: Vec<RemovedLine>,
    pub seed: u64,
}

/// A source file that produced no record of some kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub source_id: String,
    pub kind: RecordKind,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub file_id: String,
    pub path: PathBuf,
    pub first_diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CullResult {
    /// Sorted by id.
    pub kept: Vec<String>,
    pub rejected: Vec<Rejection>,
    pub files: BTreeMap<String, PathBuf>,
    pub warnings: Vec<String>,
}

fn is_st_file(path: &Path) -> bool {
    path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("st"))
}

/// Keeps the `.st` files that pass `checker`. File ids are file stems and
/// must be unique across `dirs`.
pub fn cull(dirs: &[PathBuf], checker: &dyn Checker) -> Result<CullResult, DatasetError> {
    let mut paths: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut warnings = Vec::new();
    for dir in dirs {
        let entries = std::fs::read_dir(dir).map_err(|e| DatasetError::io(dir, e))?;
        let mut found = 0;
        for entry in entries {
            let path = entry.map_err(|e| DatasetError::io(dir, e))?.path();
            if !is_st_file(&path) {
                continue;
            }
            found += 1;
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            if paths.insert(id.clone(), path).is_some() {
                return Err(DatasetError::DuplicateId(id));
            }
        }
        if found == 0 {
            warnings.push(format!("{} contains no .st files", dir.display()));
        }
    }
    let mut result = CullResult { kept: Vec::new(), rejected: Vec::new(), files: BTreeMap::new(), warnings };
    for (id, path) in paths {
        let bytes = std::fs::read(&path).map_err(|e| DatasetError::io(&path, e))?;
        let report = checker.check(&id, &String::from_utf8_lossy(&bytes))?;
        if report.pass {
            result.kept.push(id.clone());
            result.files.insert(id, path);
        } else {
            let first = report.first_error().map(ToString::to_string).unwrap_or_default();
            result.rejected.push(Rejection { file_id: id, path, first_diagnostic: first });
        }
    }
    Ok(result)
}

/// Training hyperparameters carried as provenance in every manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneMetadata {
    pub rank: u32,
    pub alpha: u32,
    pub batch_size: u32,
    pub epochs: u32,
}

impl Default for FinetuneMetadata {
    fn default() -> Self {
        FinetuneMetadata { rank: 64, alpha: 128, batch_size: 256, epochs: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub corpus_id: String,
    pub seed: u64,
    /// Fraction of ids assigned to training.
    pub ratio: f64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub train_count: usize,
    pub test_count: usize,
    pub finetune: FinetuneMetadata,
}

impl SplitManifest {
    pub fn side_of(&self, id: &str) -> Option<SplitSide> {
        if self.train_ids.binary_search_by(|x| x.as_str().cmp(id)).is_ok() {
            Some(SplitSide::Train)
        } else if self.test_ids.binary_search_by(|x| x.as_str().cmp(id)).is_ok() {
            Some(SplitSide::Test)
        } else {
            None
        }
    }
}

/// Test size is `round(n * (1 - ratio))` clamped to `1..=n-1`, unless
/// `test_count` overrides it. Both id lists come out sorted.
pub fn split(
    corpus_id: &str,
    ids: &[String],
    ratio: f64,
    seed: u64,
    test_count: Option<usize>,
) -> Result<SplitManifest, DatasetError> {
    let mut ids: Vec<String> = ids.to_vec();
    ids.sort();
    ids.dedup();
    let n = ids.len();
    if n < 2 {
        return Err(DatasetError::InvalidSplit(format!("need at least 2 ids, got {n}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::InvalidSplit(format!("ratio must lie strictly between 0 and 1, got {ratio}")));
    }
    let test = match test_count {
        Some(t) if t == 0 || t >= n => {
            return Err(DatasetError::InvalidSplit(format!("test count must lie in 1..={}, got {t}", n - 1)))
        }
        Some(t) => t,
        None => ((n as f64 * (1.0 - ratio)).round() as usize).clamp(1, n - 1),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let mut test_ids = ids[..test].to_vec();
    let mut train_ids = ids[test..].to_vec();
    test_ids.sort();
    train_ids.sort();
    Ok(SplitManifest {
        corpus_id: corpus_id.to_string(),
        seed,
        ratio,
        train_count: train_ids.len(),
        test_count: test_ids.len(),
        train_ids,
        test_ids,
        finetune: FinetuneMetadata::default(),
    })
}

/// Seed for one (file, derivation) pair, independent of processing order.
pub fn file_seed(seed: u64, file_id: &str, kind: RecordKind) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(kind.as_str().as_bytes());
    h.update([0]);
    h.update(file_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn make_generation(file_id: &str, source: &str) -> DatasetRecord {
    DatasetRecord {
        id: format!("generation-{file_id}"),
        kind: RecordKind::Generation,
        source_id: file_id.to_string(),
        split: None,
        input: source.to_string(),
        target: String::new(),
        mutation_log: Vec::new(),
        seed: 0,
    }
}

/// Byte offsets just after each statement, nested statements included,
/// sorted and unique. A boundary followed only by blanks up to the end of
/// its line moves past that newline.
pub fn statement_boundaries(source: &str) -> Vec<usize> {
    let parsed = parse_source(source);
    let mut ends = BTreeSet::new();
    for pou in parsed.tree.pous() {
        walk_statements(&pou.body, &mut |s| {
            ends.insert(s.span.end());
        });
    }
    let bytes = source.as_bytes();
    ends.into_iter()
        .map(|mut end| {
            if bytes.get(end) == Some(&b';') {
                end += 1;
            }
            let rest = &source[end..];
            let line_end = rest.find('\n').map(|i| end + i + 1).unwrap_or(source.len());
            if source[end..line_end].trim().is_empty() {
                line_end
            } else {
                end
            }
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Cuts `source` after boundary `i`, drawn uniformly from
/// `ceil(0.2 M)..=floor(0.8 M)` where `M` is the number of boundaries.
pub fn make_completion(file_id: &str, source: &str, seed: u64) -> Result<DatasetRecord, Skipped> {
    let boundaries = statement_boundaries(source);
    let m = boundaries.len();
    if m < MIN_COMPLETION_STATEMENTS {
        return Err(Skipped {
            source_id: file_id.to_string(),
            kind: RecordKind::Completion,
            reason: format!("{m} statements, at least {MIN_COMPLETION_STATEMENTS} required"),
        });
    }
    let (lo, hi) = completion_window(m);
    let s = file_seed(seed, file_id, RecordKind::Completion);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    let i = rng.random_range(lo..=hi);
    let cut = boundaries[i - 1];
    Ok(DatasetRecord {
        id: format!("completion-{file_id}"),
        kind: RecordKind::Completion,
        source_id: file_id.to_string(),
        split: None,
        input: source[..cut].to_string(),
        target: source[cut..].to_string(),
        mutation_log: Vec::new(),
        seed: s,
    })
}

/// 1-based inclusive range of boundary indices eligible as cut points.
pub fn completion_window(m: usize) -> (usize, usize) {
    ((2 * m).div_ceil(10).max(1), (8 * m) / 10)
}

/// Lines holding at least one token that is not a comment (0-based).
fn code_lines(text: &str) -> BTreeSet<usize> {
    tokenize(text).tokens.iter().filter(|t| t.kind != TokenKind::Comment).map(|t| t.span.line as usize - 1).collect()
}

/// Removes uniformly chosen code lines, one at a time, until `checker`
/// rejects the text.
pub fn make_fixing(
    file_id: &str,
    source: &str,
    seed: u64,
    checker: &dyn Checker,
) -> Result<Result<DatasetRecord, Skipped>, DatasetError> {
    let s = file_seed(seed, file_id, RecordKind::Fixing);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    // (original line number, text including its newline)
    let mut lines: Vec<(usize, &str)> = source.split_inclusive('\n').enumerate().map(|(i, l)| (i + 1, l)).collect();
    let mut log = Vec::new();
    for _ in 0..MAX_FIXING_REMOVALS {
        let current: String = lines.iter().map(|(_, l)| *l).collect();
        let eligible: Vec<usize> = code_lines(&current).into_iter().filter(|&i| i < lines.len()).collect();
        if eligible.is_empty() {
            break;
        }
        let pick = eligible[rng.random_range(0..eligible.len())];
        let (line, text) = lines.remove(pick);
        log.push(RemovedLine { line, content: text.trim_end_matches(['\n', '\r']).to_string() });
        let broken: String = lines.iter().map(|(_, l)| *l).collect();
        if !checker.check(file_id, &broken)?.pass {
            return Ok(Ok(DatasetRecord {
                id: format!("fixing-{file_id}"),
                kind: RecordKind::Fixing,
                source_id: file_id.to_string(),
                split: None,
                input: broken,
                target: source.to_string(),
                mutation_log: log,
                seed: s,
            }));
        }
    }
    Ok(Err(Skipped {
        source_id: file_id.to_string(),
        kind: RecordKind::Fixing,
        reason: format!("still compiles after {} line removals", log.len()),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedDataset {
    pub manifest: SplitManifest,
    /// Ordered by (source id, kind).
    pub records: Vec<DatasetRecord>,
    pub skipped: Vec<Skipped>,
}

/// Records derived from one source, and the derivations it could not yield.
type FileDerivation = (Vec<DatasetRecord>, Vec<Skipped>);

/// Derives all three record kinds for every file in the manifest. Split
/// sides are assigned before derivation, so each source file contributes to
/// exactly one side.
pub fn derive(
    sources: &BTreeMap<String, String>,
    manifest: &SplitManifest,
    seed: u64,
    checker: &dyn Checker,
) -> Result<DerivedDataset, DatasetError> {
    use rayon::prelude::*;
    let ids: Vec<&String> = manifest.train_ids.iter().chain(&manifest.test_ids).collect();
    for id in &ids {
        if !sources.contains_key(*id) {
            return Err(DatasetError::InvalidExport(format!("no source text for manifest id '{id}'")));
        }
    }
    let per_file: Vec<Result<FileDerivation, DatasetError>> = ids
        .par_iter()
        .map(|id| {
            let src = &sources[*id];
            let side = manifest.side_of(id);
            let mut records = vec![make_generation(id, src)];
            let mut skipped = Vec::new();
            match make_completion(id, src, seed) {
                Ok(r) => records.push(r),
                Err(s) => skipped.push(s),
            }
            match make_fixing(id, src, seed, checker)? {
                Ok(r) => records.push(r),
                Err(s) => skipped.push(s),
            }
            for r in &mut records {
                r.split = side;
            }
            Ok((records, skipped))
        })
        .collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for r in per_file {
        let (rec, sk) = r?;
        records.extend(rec);
        skipped.extend(sk);
    }
    records.sort_by(|a, b| (&a.source_id, a.kind).cmp(&(&b.source_id, b.kind)));
    skipped.sort_by(|a, b| (&a.source_id, a.kind).cmp(&(&b.source_id, b.kind)));
    Ok(DerivedDataset { manifest: manifest.clone(), records, skipped })
}

/// Kind invariant violated by a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub record_id: String,
    pub reason: String,
}

/// Post-pass over emitted records. `originals` maps source ids to their text.
pub fn verify_records(
    records: &[DatasetRecord],
    originals: &BTreeMap<String, String>,
    checker: &dyn Checker,
) -> Result<Vec<Violation>, DatasetError> {
    let mut out = Vec::new();
    let mut fail =
        |r: &DatasetRecord, reason: &str| out.push(Violation { record_id: r.id.clone(), reason: reason.into() });
    for r in records {
        let original = originals.get(&r.source_id);
        match r.kind {
            RecordKind::Generation => {
                if !checker.check(&r.id, &r.input)?.pass {
                    fail(r, "generation input does not pass check");
                }
                if !r.target.is_empty() {
                    fail(r, "generation target is not empty");
                }
            }
            RecordKind::Completion => {
                if original.map(|o| format!("{}{}", r.input, r.target) != *o).unwrap_or(true) {
                    fail(r, "input + target differs from the source file");
                }
            }
            RecordKind::Fixing => {
                if checker.check(&r.id, &r.input)?.pass {
                    fail(r, "fixing input passes check");
                }
                if !checker.check(&r.id, &r.target)?.pass {
                    fail(r, "fixing target does not pass check");
                }
                if original != Some(&r.target) {
                    fail(r, "fixing target differs from the source file");
                }
            }
        }
    }
    Ok(out)
}

/// Writes `manifest.json`, `skipped.json` and one `records/<id>.json` per
/// record.
pub fn write_dataset(dir: &Path, data: &DerivedDataset) -> Result<(), DatasetError> {
    let records_dir = dir.join("records");
    std::fs::create_dir_all(&records_dir).map_err(|e| DatasetError::io(&records_dir, e))?;
    write_json(&dir.join("manifest.json"), &data.manifest)?;
    write_json(&dir.join("skipped.json"), &data.skipped)?;
    for r in &data.records {
        write_json(&records_dir.join(format!("{}.json", r.id)), r)?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<DerivedDataset, DatasetError> {
    let manifest = read_json(&dir.join("manifest.json"))?;
    let skipped = read_json(&dir.join("skipped.json"))?;
    let records_dir = dir.join("records");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&records_dir)
        .map_err(|e| DatasetError::io(&records_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut records = paths.iter().map(|p| read_json(p)).collect::<Result<Vec<DatasetRecord>, _>>()?;
    records.sort_by(|a, b| (&a.source_id, a.kind).cmp(&(&b.source_id, b.kind)));
    Ok(DerivedDataset { manifest, records, skipped })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| DatasetError::io(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| DatasetError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::io(path, e))
}

/// Plain-language description of a file's POU signatures, used as the
/// instruction of generation pairs.
pub fn describe_signatures(source: &str) -> String {
    let parsed = parse_source(source);
    let mut parts = Vec::new();
    for pou in parsed.tree.pous() {
        let mut groups: BTreeMap<&'static str, Vec<String>> = BTreeMap::new();
        for (block, decl) in pou.declarations() {
            let label = match block.kind {
                VarKind::Input => "inputs",
                VarKind::Output => "outputs",
                VarKind::InOut => "in-out parameters",
                _ => continue,
            };
            let ty = stforge_st::pretty::type_string(&decl.ty);
            groups.entry(label).or_default().extend(decl.names.iter().map(|n| format!("{} : {ty}", n.name)));
        }
        let mut s = format!("a {} named {}", pou.kind.keyword(), pou.name.name);
        if let Some(rt) = &pou.return_type {
            s.push_str(&format!(" returning {}", stforge_st::pretty::type_string(rt)));
        }
        for label in ["inputs", "outputs", "in-out parameters"] {
            if let Some(v) = groups.get(label) {
                s.push_str(&format!(", {label} {}", v.join(", ")));
            }
        }
        parts.push(s);
    }
    format!("Write IEC 61131-3 Structured Text implementing {}. Reply with the complete file.", parts.join("; and "))
}

#[derive(Debug, Serialize)]
struct ExportHeader<'a> {
    manifest: &'a SplitManifest,
    kind: RecordKind,
    side: SplitSide,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InstructionPair {
    pub prompt: String,
    pub completion: String,
}

/// Newline-delimited JSON: a header line with the manifest, then one
/// `{prompt, completion}` line per record. All records must share one kind
/// and come from source files on `side` of the split.
pub fn export_finetune(
    records: &[DatasetRecord],
    manifest: &SplitManifest,
    side: SplitSide,
    templates: &TemplateSet,
) -> Result<String, DatasetError> {
    let first = records.first().ok_or_else(|| DatasetError::InvalidExport("no records to export".into()))?;
    let kind = first.kind;
    if let Some(r) = records.iter().find(|r| r.kind != kind) {
        return Err(DatasetError::InvalidExport(format!(
            "mixed record kinds: {} and {}",
            kind.as_str(),
            r.kind.as_str()
        )));
    }
    if let Some(r) = records.iter().find(|r| manifest.side_of(&r.source_id) != Some(side)) {
        return Err(DatasetError::InvalidExport(format!(
            "record {} comes from '{}', which is not on the {:?} side of the split",
            r.id, r.source_id, side
        )));
    }
    let header = ExportHeader { manifest, kind, side, count: records.len() };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for r in records {
        let pair = match kind {
            RecordKind::Generation => {
                InstructionPair { prompt: describe_signatures(&r.input), completion: r.input.clone() }
            }
            RecordKind::Completion => InstructionPair {
                prompt: flatten(&templates.render_completion_prompt(&r.input)?),
                completion: r.target.clone(),
            },
            RecordKind::Fixing => {
                let report = stforge_st::check_named(&r.source_id, &r.input);
                InstructionPair {
                    prompt: flatten(&templates.render_fix_prompt_for(&r.input, &report)?),
                    completion: r.target.clone(),
                }
            }
        };
        out.push_str(&serde_json::to_string(&pair).expect("pair serializes"));
        out.push('\n');
    }
    Ok(out)
}
