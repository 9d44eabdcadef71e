//! End-to-end runs of the `cga` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn cga(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cga")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synthetic() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A model trained once with the shipped config, shared by the tests that
/// need one.
fn trained_model() -> &'static Path {
    static MODEL: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, model) = MODEL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let model = dir.path().join("model.ckpt");
        let cfg = synthetic().join("train.cfg");
        let o = cga(&["train", "--config", path(&cfg), "--out", path(&model)]);
        assert!(o.status.success(), "{}", stderr(&o));
        (dir, model)
    });
    model
}

#[test]
fn train_writes_checkpoint_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.ckpt");
    let cfg = synthetic().join("train.cfg");
    let o = cga(&["train", "--config", path(&cfg), "--out", path(&model), "--set", "epochs=2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(model.exists());
    let history = fs::read_to_string(dir.path().join("m.history.csv")).unwrap();
    assert!(history.starts_with("epoch,"));
    assert_eq!(history.lines().count(), 3);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = cga(&["train", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert_eq!(cga(&["--help"]).status.code(), Some(0));
}

#[test]
fn gradcheck_passes_and_reports_the_error() {
    let o = cga(&["gradcheck", "--d", "8", "--k", "2", "--trials", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let last = out.lines().rev().find(|l| l.starts_with("max relative error")).unwrap();
    let value: f64 = last.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(value < 1e-4, "{last}");
}

#[test]
fn failing_gradcheck_is_a_numerical_error() {
    let o = cga(&["gradcheck", "--d", "4", "--k", "1", "--trials", "5", "--tol", "1e-30"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn selftest_passes() {
    let o = cga(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

/// Entity labels of each ranked block printed by `answer`.
fn ranked_blocks(out: &str) -> Vec<Vec<String>> {
    out.split("\n\n")
        .map(|block| {
            block
                .lines()
                .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()))
                .map(|l| l.split('\t').nth(1).unwrap().to_string())
                .collect()
        })
        .collect()
}

fn answer(query: &str, top_n: &str) -> Output {
    let bundle = synthetic().join("bundle");
    cga(&["answer", "--model", path(trained_model()), "--query", query, "--oracle", "--dataset", path(&bundle), "--top-n", top_n])
}

/// Labels after `oracle answers (n):` in each block.
fn oracle_sets(out: &str) -> Vec<Vec<String>> {
    out.lines()
        .filter_map(|l| l.strip_prefix("oracle answers ("))
        .map(|l| l.split_once(':').unwrap().1.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect())
        .collect()
}

#[test]
fn answer_ranks_even_without_oracle_answers() {
    // Two agents own disjoint item sets.
    let o = answer("owns(agent_00, ?i), owns(agent_01, ?i)", "5");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(ranked_blocks(&out)[0].len(), 5);
    assert_eq!(oracle_sets(&out), vec![Vec::<String>::new()]);
}

#[test]
fn oracle_answers_are_candidates() {
    let o = answer("knows(agent_03, ?a), likes(?a, ?i)", "100");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let candidates = &ranked_blocks(&out)[0];
    assert_eq!(candidates.len(), 25, "every item is ranked");
    let oracle = &oracle_sets(&out)[0];
    assert!(!oracle.is_empty());
    assert!(oracle.iter().all(|e| candidates.contains(e)));
}

#[test]
fn type_inconsistent_query_is_a_data_error() {
    let o = answer("likes(agent_00, ?i), owns(?i, ?x)", "5");
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
}

#[test]
fn held_out_one_chains_rank_in_the_top_five() {
    let file = synthetic().join("bundle/queries/test/1-chain.jsonl");
    let text = fs::read_to_string(&file).unwrap();
    let answers: Vec<String> = text
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["answer"].as_str().unwrap().to_string()
        })
        .collect();
    let o = cga(&["answer", "--model", path(trained_model()), "--query-file", path(&file), "--top-n", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let blocks = ranked_blocks(&stdout(&o));
    assert_eq!(blocks.len(), answers.len());
    let hits = blocks.iter().zip(&answers).filter(|(b, a)| b.contains(a)).count();
    assert!(hits * 5 >= answers.len() * 4, "{hits} of {} in the top five", answers.len());
}

/// Generates the raw synthetic files, builds a bundle and samples a few
/// queries into `dir`.
fn small_bundle(dir: &Path, seed: &str) -> PathBuf {
    let raw = dir.join("raw");
    let bundle = dir.join("bundle");
    let o = cga(&["synthetic", "--out", path(&raw)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = cga(&[
        "build-dataset",
        "--triples",
        path(&raw.join("raw_triples.tsv")),
        "--types",
        path(&raw.join("types.tsv")),
        "--seeds",
        path(&raw.join("seeds.txt")),
        "--out",
        path(&bundle),
        "--train",
        "0.8",
        "--valid",
        "0.05",
        "--test",
        "0.15",
        "--seed",
        seed,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = cga(&[
        "sample-queries",
        "--dataset",
        path(&bundle),
        "--train-count",
        "30",
        "--valid-count",
        "5",
        "--test-count",
        "10",
        "--negatives",
        "5",
        "--seed",
        seed,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    bundle
}

#[test]
fn dataset_train_evaluate_flow() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = small_bundle(dir.path(), "4");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(bundle.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["queries"]["test"].as_object().unwrap().len(), 11);

    let model = dir.path().join("m.ckpt");
    let o = cga(&[
        "train", "--dataset", path(&bundle), "--out", path(&model), "--set", "epochs=3", "--set", "dim=8", "--seed", "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = dir.path().join("report.csv");
    let json = dir.path().join("report.json");
    let o = cga(&["evaluate", "--model", path(&model), "--dataset", path(&bundle), "--csv", path(&csv), "--json", path(&json)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("H-Neg"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["per_type"].as_array().unwrap().len(), 11);
    let auc = report["auc_all"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(fs::read_to_string(&csv).unwrap().lines().count() > 11);

    let o = cga(&["evaluate", "--model", path(&model), "--dataset", path(&bundle), "--split", "nowhere"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = small_bundle(dir.path(), "6");
    let run = |name: &str| {
        let model = dir.path().join(name);
        let o = cga(&[
            "train", "--dataset", path(&bundle), "--out", path(&model), "--set", "epochs=2", "--set", "dim=8", "--seed", "5",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(model).unwrap()
    };
    assert_eq!(run("a.ckpt"), run("b.ckpt"));
}

#[test]
fn missing_input_file_is_a_data_error() {
    let o = cga(&["evaluate", "--model", "/nonexistent/model.ckpt", "--dataset", "/nonexistent"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
