//! End-to-end tests driving the compiled binary: artifact layout, exit
//! codes, idempotence, and the full prepare/train/predict/evaluate flow.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avgen"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "expected success\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    let raw = std::fs::read_to_string(path)
        .unwrap_or_else(|err| panic!("read {}: {err}", path.display()));
    serde_json::from_str(&raw).unwrap_or_else(|err| panic!("parse {}: {err}", path.display()))
}

/// A canonical corpus whose gold values all occur verbatim in the text.
fn corpus_lines(n: usize) -> String {
    let mut lines = String::new();
    for i in 0..n {
        let line = json!({
            "id": format!("r{i:03}"),
            "category": format!("cat{}", i % 2),
            "text": format!("item {i} by brandco{i} in shade{i}"),
            "pairs": [
                { "attribute": "Brand", "value": format!("brandco{i}") },
                { "attribute": "Color", "value": format!("shade{i}") },
            ],
        });
        lines.push_str(&line.to_string());
        lines.push('\n');
    }
    lines
}

fn write_corpus(dir: &Path, name: &str, n: usize) -> String {
    let path = dir.join(name);
    std::fs::write(&path, corpus_lines(n)).expect("write corpus");
    path.display().to_string()
}

/// Runs `prepare` on a fresh corpus and returns the split directory.
fn prepared_dir(root: &Path, n: usize) -> String {
    let corpus = write_corpus(root, "corpus.jsonl", n);
    let data = root.join("data").display().to_string();
    assert_ok(&run(&[
        "prepare",
        "--format",
        "canonical",
        "--in",
        &corpus,
        "--out",
        &data,
    ]));
    data
}

#[test]
fn prepare_writes_splits_idempotently() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path(), "corpus.jsonl", 40);
    let out = tmp.path().join("run");
    let out_str = out.display().to_string();
    let args = [
        "prepare",
        "--format",
        "canonical",
        "--in",
        &corpus,
        "--out",
        &out_str,
        "--seed",
        "3",
    ];
    assert_ok(&run(&args));

    let artifacts = [
        "train.jsonl",
        "val.jsonl",
        "test.jsonl",
        "split_report.json",
        "run.json",
    ];
    let first: Vec<Vec<u8>> = artifacts
        .iter()
        .map(|name| std::fs::read(out.join(name)).expect("artifact exists"))
        .collect();
    let report = read_json(&out.join("split_report.json"));
    assert_eq!(report["seed"], json!(3));
    let train = std::fs::read_to_string(out.join("train.jsonl")).unwrap();
    assert_eq!(train.lines().count(), 32, "8:1:1 of 40 records");
    let manifest = read_json(&out.join("run.json"));
    assert_eq!(manifest["command"], json!("prepare"));
    assert_eq!(manifest["seed"], json!(3));
    assert!(out.join("log.jsonl").exists());

    // Re-running with identical inputs reproduces every artifact byte.
    assert_ok(&run(&args));
    for (name, bytes) in artifacts.iter().zip(first) {
        let again = std::fs::read(out.join(name)).unwrap();
        assert_eq!(again, bytes, "{name} changed between identical runs");
    }
}

#[test]
fn prepare_rejects_unknown_format_and_bad_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path(), "corpus.jsonl", 4);
    let out = tmp.path().join("run").display().to_string();

    let unknown = run(&["prepare", "--format", "tsv", "--in", &corpus, "--out", &out]);
    assert_eq!(exit_code(&unknown), 2, "unknown format is a usage error");
    assert!(stderr(&unknown).contains("tsv"));

    let bad = run(&[
        "prepare",
        "--format",
        "canonical",
        "--in",
        &corpus,
        "--out",
        &out,
        "--ratios",
        "0.5:0.2:0.2",
    ]);
    assert_eq!(
        exit_code(&bad),
        2,
        "ratios not summing to 1 are a usage error"
    );
    assert!(stderr(&bad).to_lowercase().contains("ratio"));

    let malformed = run(&[
        "prepare",
        "--format",
        "canonical",
        "--in",
        &corpus,
        "--out",
        &out,
        "--ratios",
        "8:1",
    ]);
    assert_eq!(exit_code(&malformed), 2);
}

#[test]
fn train_requires_strategy_and_existing_splits() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("model").display().to_string();

    let missing_flag = run(&[
        "train", "--model", "mock", "--data", "nowhere", "--out", &out,
    ]);
    assert_eq!(exit_code(&missing_flag), 2);
    assert!(stderr(&missing_flag).contains("--strategy"));

    let unknown = run(&[
        "train",
        "--strategy",
        "ensemble",
        "--model",
        "mock",
        "--data",
        "nowhere",
        "--out",
        &out,
    ]);
    assert_eq!(
        exit_code(&unknown),
        2,
        "ensembles cannot be trained directly"
    );

    let missing_dir = tmp.path().join("empty");
    std::fs::create_dir_all(&missing_dir).unwrap();
    let missing = run(&[
        "train",
        "--strategy",
        "end2end",
        "--model",
        "mock",
        "--data",
        &missing_dir.display().to_string(),
        "--out",
        &out,
    ]);
    assert_eq!(exit_code(&missing), 1, "missing split files are fatal");
    assert!(stderr(&missing).contains("train.jsonl"));
}

#[test]
fn pipeline_training_writes_two_member_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let data = prepared_dir(tmp.path(), 40);
    let model = tmp.path().join("model");
    assert_ok(&run(&[
        "train",
        "--strategy",
        "pipeline",
        "--model",
        "mock",
        "--data",
        &data,
        "--out",
        &model.display().to_string(),
    ]));
    let manifest = read_json(&model.join("strategy.json"));
    assert_eq!(manifest["kind"], json!("pipeline"));
    assert!(model.join("ve/manifest.json").exists());
    assert!(model.join("ag/manifest.json").exists());
}

#[test]
fn mock_round_trip_scores_a_perfect_f1() {
    let tmp = tempfile::tempdir().unwrap();
    let data = prepared_dir(tmp.path(), 40);
    let train_split = format!("{data}/train.jsonl");
    let model = tmp.path().join("model").display().to_string();
    assert_ok(&run(&[
        "train",
        "--strategy",
        "end2end",
        "--model",
        "mock",
        "--data",
        &data,
        "--out",
        &model,
    ]));

    let predictions = tmp.path().join("predictions");
    assert_ok(&run(&[
        "predict",
        "--model-dir",
        &model,
        "--data",
        &train_split,
        "--out",
        &predictions.display().to_string(),
    ]));
    let first = std::fs::read(predictions.join("predictions.jsonl")).unwrap();

    let eval_dir = tmp.path().join("eval");
    assert_ok(&run(&[
        "evaluate",
        "--predictions",
        &predictions.join("predictions.jsonl").display().to_string(),
        "--gold",
        &train_split,
        "--out",
        &eval_dir.display().to_string(),
    ]));
    let report = read_json(&eval_dir.join("report.json"));
    assert_eq!(report["precision"], json!(100.0));
    assert_eq!(report["recall"], json!(100.0));
    assert_eq!(report["f1"], json!(100.0));

    // Prediction artifacts are reproducible byte for byte.
    let again_dir = tmp.path().join("predictions-again");
    assert_ok(&run(&[
        "predict",
        "--model-dir",
        &model,
        "--data",
        &train_split,
        "--out",
        &again_dir.display().to_string(),
    ]));
    let again = std::fs::read(again_dir.join("predictions.jsonl")).unwrap();
    assert_eq!(first, again);
}

#[test]
fn evaluate_fails_on_an_unknown_prediction_id() {
    let tmp = tempfile::tempdir().unwrap();
    let gold = write_corpus(tmp.path(), "gold.jsonl", 2);
    let predictions = tmp.path().join("predictions.jsonl");
    let line = json!({
        "id": "ghost-record",
        "strategy": "end2end",
        "pairs": [{ "attribute": "Brand", "value": "brandco0" }],
        "diagnostics": { "malformed_segments": 0, "values_not_found": 0, "duplicates_removed": 0 },
    });
    std::fs::write(&predictions, format!("{line}\n")).unwrap();

    let output = run(&[
        "evaluate",
        "--predictions",
        &predictions.display().to_string(),
        "--gold",
        &gold,
        "--out",
        &tmp.path().join("eval").display().to_string(),
    ]);
    assert_eq!(exit_code(&output), 1);
    assert!(
        stderr(&output).contains("ghost-record"),
        "error names the offending id: {}",
        stderr(&output)
    );
}

#[test]
fn ensemble_evaluation_unions_member_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let gold = write_corpus(tmp.path(), "gold.jsonl", 2);
    let member = |name: &str, attribute: &str, values: [&str; 2]| {
        let path = tmp.path().join(name);
        let mut text = String::new();
        for (i, value) in values.iter().enumerate() {
            let line = json!({
                "id": format!("r{i:03}"),
                "strategy": "end2end",
                "pairs": [{ "attribute": attribute, "value": value }],
                "diagnostics": {
                    "malformed_segments": 0, "values_not_found": 0, "duplicates_removed": 0,
                },
            });
            text.push_str(&line.to_string());
            text.push('\n');
        }
        std::fs::write(&path, text).unwrap();
        path.display().to_string()
    };
    let brands = member("brands.jsonl", "Brand", ["brandco0", "brandco1"]);
    let colors = member("colors.jsonl", "Color", ["shade0", "shade1"]);

    let eval_dir = tmp.path().join("eval");
    assert_ok(&run(&[
        "evaluate",
        "--ensemble",
        &brands,
        &colors,
        "--gold",
        &gold,
        "--out",
        &eval_dir.display().to_string(),
    ]));
    let report = read_json(&eval_dir.join("report.json"));
    assert_eq!(
        report["f1"],
        json!(100.0),
        "the union covers all gold pairs"
    );

    let single_dir = tmp.path().join("eval-single");
    assert_ok(&run(&[
        "evaluate",
        "--predictions",
        &brands,
        "--gold",
        &gold,
        "--out",
        &single_dir.display().to_string(),
    ]));
    let single = read_json(&single_dir.join("report.json"));
    assert_eq!(
        single["recall"],
        json!(50.0),
        "one member finds half the pairs"
    );
}

#[test]
fn crosseval_emits_a_diagonal_matrix_for_disjoint_corpora() {
    let tmp = tempfile::tempdir().unwrap();
    let mut entries = Vec::new();
    for name in ["ae", "oamine", "mave"] {
        let dir = tmp.path().join(name);
        std::fs::create_dir_all(&dir).unwrap();
        let mut lines = String::new();
        for i in 0..3 {
            let line = json!({
                "id": format!("{name}-{i}"),
                "category": name,
                "text": format!("{name} exclusive product {i} with fabric{name}{i}"),
                "pairs": [{ "attribute": "Material", "value": format!("fabric{name}{i}") }],
            });
            lines.push_str(&line.to_string());
            lines.push('\n');
        }
        std::fs::write(dir.join("train.jsonl"), &lines).unwrap();
        std::fs::write(dir.join("val.jsonl"), "").unwrap();
        std::fs::write(dir.join("test.jsonl"), &lines).unwrap();
        let model = dir.join("model");
        assert_ok(&run(&[
            "train",
            "--strategy",
            "end2end",
            "--model",
            "mock",
            "--data",
            &dir.display().to_string(),
            "--out",
            &model.display().to_string(),
        ]));
        entries.push(format!(
            "{name}={},{}",
            model.display(),
            dir.join("test.jsonl").display()
        ));
    }

    let out = tmp.path().join("matrix");
    assert_ok(&run(&[
        "crosseval",
        "--entry",
        &entries[0],
        "--entry",
        &entries[1],
        "--entry",
        &entries[2],
        "--out",
        &out.display().to_string(),
    ]));
    let matrix = read_json(&out.join("matrix.json"));
    for row in ["ae", "oamine", "mave"] {
        for col in ["ae", "oamine", "mave"] {
            let expected = if row == col { 100.0 } else { 0.0 };
            assert_eq!(matrix[row][col], json!(expected), "cell ({row}, {col})");
        }
    }
}

#[test]
fn costs_reports_pipeline_memory_at_twice_the_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = prepared_dir(tmp.path(), 40);
    let out = tmp.path().join("costs");
    assert_ok(&run(&[
        "costs",
        "--model",
        "mock",
        "--data",
        &data,
        "--probe",
        "train",
        "--out",
        &out.display().to_string(),
    ]));
    let report = read_json(&out.join("costs.json"));
    assert_eq!(report["baseline"], json!("end2end"));
    assert_eq!(report["raw_only"], json!(false));
    let rows = report["rows"].as_array().expect("rows");
    assert_eq!(rows.len(), 3);
    let row = |name: &str| {
        rows.iter()
            .find(|r| r["strategy"] == json!(name))
            .unwrap_or_else(|| panic!("{name} row"))
            .clone()
    };
    assert_eq!(row("pipeline")["normalized"]["memory"], json!(2.0));
    let baseline = row("end2end");
    for metric in ["train", "infer", "memory", "pairs"] {
        assert_eq!(baseline["normalized"][metric], json!(1.0));
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_override_them() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path(), "corpus.jsonl", 40);
    let from_config = tmp.path().join("from-config");
    let config = tmp.path().join("run.conf");
    std::fs::write(
        &config,
        format!(
            "# experiment defaults\nformat = canonical\nin = {corpus}\nseed = 5\nout = {}\n",
            from_config.display()
        ),
    )
    .unwrap();

    assert_ok(&run(&[
        "prepare",
        "--config",
        &config.display().to_string(),
    ]));
    let report = read_json(&from_config.join("split_report.json"));
    assert_eq!(report["seed"], json!(5), "config file supplies the seed");

    let overridden = tmp.path().join("overridden");
    assert_ok(&run(&[
        "prepare",
        "--config",
        &config.display().to_string(),
        "--seed",
        "9",
        "--out",
        &overridden.display().to_string(),
    ]));
    let report = read_json(&overridden.join("split_report.json"));
    assert_eq!(
        report["seed"],
        json!(9),
        "flags take precedence over the config file"
    );
}
