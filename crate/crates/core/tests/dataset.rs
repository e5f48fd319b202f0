//! Dataset derivation over the bundled mini-corpus.
//!
//! `tests/golden/dataset/seed42.jsonl` holds the manifest followed by every
//! record for seed 42. Set `UPDATE_GOLDEN=1` to rewrite it after an
//! intentional change to derivation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use stforge_core::checker::BuiltinChecker;
use stforge_core::dataset::{
    completion_window, cull, derive, export_finetune, make_completion, read_dataset, split, write_dataset,
    DatasetRecord, DerivedDataset, RecordKind, SplitSide,
};
use stforge_core::prompting::TemplateSet;
use stforge_st::check;

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus/mini/valid")
}

fn sources() -> BTreeMap<String, String> {
    let culled = cull(&[corpus()], &BuiltinChecker).unwrap();
    assert!(culled.rejected.is_empty());
    culled.files.iter().map(|(id, p)| (id.clone(), std::fs::read_to_string(p).unwrap())).collect()
}

fn build(seed: u64) -> DerivedDataset {
    let src = sources();
    let ids: Vec<String> = src.keys().cloned().collect();
    let manifest = split("mini", &ids, 0.95, seed, None).unwrap();
    derive(&src, &manifest, seed, &BuiltinChecker).unwrap()
}

fn jsonl(data: &DerivedDataset) -> String {
    let mut out = serde_json::to_string(&data.manifest).unwrap() + "\n";
    for r in &data.records {
        out.push_str(&serde_json::to_string(r).unwrap());
        out.push('\n');
    }
    out
}

#[test]
fn seed_42_matches_the_golden_records() {
    let actual = jsonl(&build(42));
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/dataset/seed42.jsonl");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    for (i, (a, e)) in actual.lines().zip(expected.lines()).enumerate() {
        assert_eq!(a, e, "line {} of {}", i + 1, path.display());
    }
    assert_eq!(actual.lines().count(), expected.lines().count());
}

#[test]
fn every_record_satisfies_its_kind_invariant() {
    let src = sources();
    let data = build(42);
    for kind in [RecordKind::Generation, RecordKind::Completion, RecordKind::Fixing] {
        assert!(data.records.iter().any(|r| r.kind == kind), "no {kind:?} records");
    }
    for r in &data.records {
        let original = &src[&r.source_id];
        match r.kind {
            RecordKind::Generation => {
                assert!(check(&r.input).pass, "{}", r.id);
                assert_eq!(&r.input, original);
            }
            RecordKind::Completion => {
                assert_eq!(format!("{}{}", r.input, r.target).as_bytes(), original.as_bytes(), "{}", r.id);
                assert!(!r.input.is_empty() && !r.target.trim().is_empty(), "{}", r.id);
            }
            RecordKind::Fixing => {
                assert!(!check(&r.input).pass, "{}", r.id);
                assert!(check(&r.target).pass, "{}", r.id);
                assert_eq!(&r.target, original);
                assert_eq!(replay_removals(original, r), r.input, "{}", r.id);
            }
        }
    }
}

/// Applies a fixing record's mutation log to the original text.
fn replay_removals(original: &str, r: &DatasetRecord) -> String {
    let removed: Vec<usize> = r.mutation_log.iter().map(|m| m.line).collect();
    let lines: Vec<&str> = original.split_inclusive('\n').collect();
    for m in &r.mutation_log {
        assert_eq!(lines[m.line - 1].trim_end_matches(['\n', '\r']), m.content);
    }
    lines.iter().enumerate().filter(|(i, _)| !removed.contains(&(i + 1))).map(|(_, l)| *l).collect()
}

#[test]
fn same_seed_is_identical_and_another_seed_differs() {
    let a = jsonl(&build(42));
    assert_eq!(a, jsonl(&build(42)));
    let b = build(43);
    let a = build(42);
    let changed = a.records.iter().zip(&b.records).filter(|(x, y)| x != y).count();
    assert!(changed >= 1);
}

#[test]
fn each_source_lands_on_exactly_one_side() {
    let data = build(42);
    let m = &data.manifest;
    assert_eq!(m.train_count + m.test_count, sources().len());
    for id in &m.train_ids {
        assert!(!m.test_ids.contains(id));
    }
    for r in &data.records {
        assert_eq!(r.split, m.side_of(&r.source_id), "{}", r.id);
        assert!(r.split.is_some());
    }
}

#[test]
fn written_dataset_reads_back_unchanged() {
    let data = build(42);
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &data).unwrap();
    assert_eq!(read_dataset(dir.path()).unwrap(), data);
}

#[test]
fn export_holds_only_one_side_and_kind() {
    let data = build(42);
    let train: Vec<DatasetRecord> = data
        .records
        .iter()
        .filter(|r| r.kind == RecordKind::Fixing && r.split == Some(SplitSide::Train))
        .cloned()
        .collect();
    let text = export_finetune(&train, &data.manifest, SplitSide::Train, &TemplateSet::builtin()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), train.len() + 1);
    let header: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(header["count"], train.len());
    assert_eq!(header["manifest"]["finetune"]["rank"], 64);
    for (line, r) in lines[1..].iter().zip(&train) {
        let pair: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(pair["completion"], r.target.as_str());
        assert!(pair["prompt"].as_str().unwrap().contains(&r.input));
    }
    assert!(export_finetune(&train, &data.manifest, SplitSide::Test, &TemplateSet::builtin()).is_err());
}

#[test]
fn forty_task_split_rounds_to_two_test_files() {
    let ids: Vec<String> = (0..40).map(|i| format!("f{i:02}")).collect();
    let m = split("c", &ids, 0.95, 42, None).unwrap();
    assert_eq!((m.train_count, m.test_count), (38, 2));
    let m = split("c", &ids, 0.95, 42, Some(5)).unwrap();
    assert_eq!((m.train_count, m.test_count), (35, 5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn split_partitions_the_ids(n in 2usize..200, ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("id{i:03}")).collect();
        let m = split("c", &ids, ratio, seed, None).unwrap();
        prop_assert_eq!(m.train_count + m.test_count, n);
        prop_assert!(m.test_count >= 1 && m.train_count >= 1);
        let mut all: Vec<String> = m.train_ids.iter().chain(&m.test_ids).cloned().collect();
        all.sort();
        prop_assert_eq!(all, ids.clone());
        prop_assert_eq!(split("c", &ids, ratio, seed, None).unwrap(), m);
    }

    /// The cut window is [ceil(0.2 M), floor(0.8 M)] in exact integer terms.
    #[test]
    fn completion_window_bounds(m in 5usize..5000) {
        let (lo, hi) = completion_window(m);
        prop_assert!(lo * 10 >= 2 * m && (lo - 1) * 10 < 2 * m);
        prop_assert!(hi * 10 <= 8 * m && (hi + 1) * 10 > 8 * m);
        prop_assert!(1 <= lo && lo <= hi && hi <= m);
    }

    #[test]
    fn completion_reconstructs_any_seed(file in 0usize..25, seed in any::<u64>()) {
        let src = sources();
        let (id, text) = src.iter().nth(file % src.len()).unwrap();
        if let Ok(r) = make_completion(id, text, seed) {
            prop_assert_eq!(format!("{}{}", r.input, r.target), text.clone());
        }
    }
}
