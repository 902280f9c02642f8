//! End-to-end runs of the CLI binary: synthetic data generation, training,
//! attribution, and the forecast chain, plus reproducibility and exit-code
//! contracts.

use std::path::Path;
use std::process::Command;

fn sesnet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sesnet"))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

fn line_count(path: &Path) -> usize {
    String::from_utf8(read(path)).unwrap().lines().count()
}

#[test]
fn synth_writes_the_default_345_buildings() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let status = sesnet()
        .args(["synth", "--out"])
        .arg(&out)
        .args(["--seed", "42"])
        .status()
        .unwrap();
    assert!(status.success());
    // header + one row per building
    assert_eq!(line_count(&out.join("features.csv")), 346);
    for file in ["schema.json", "cases.csv", "manifest.json"] {
        assert!(out.join(file).exists(), "{file} missing");
    }
}

#[test]
fn synth_is_byte_identical_under_one_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let status = sesnet()
            .args(["synth", "--seed", "7", "--districts", "12,9,6", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for file in ["schema.json", "features.csv", "cases.csv", "manifest.json"] {
        assert_eq!(read(&a.join(file)), read(&b.join(file)), "{file} differs");
    }
}

#[test]
fn synth_respects_district_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tiny");
    let status = sesnet()
        .args(["synth", "--districts", "2,2,2", "--seed", "3", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(line_count(&out.join("features.csv")), 7);
}

#[test]
fn full_pipeline_runs_and_chain_consumes_shapley_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let run = |args: &[&str]| {
        let output = sesnet()
            .args(args)
            .args(["--seed", "11", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "{args:?} failed:\n{}\n{}",
            String::from_utf8_lossy(&output.stdout),
            String::from_utf8_lossy(&output.stderr)
        );
        String::from_utf8(output.stdout).unwrap()
    };

    run(&["synth", "--districts", "14,10,8"]);
    run(&["train", "--epochs", "40"]);
    assert!(out.join("model.ckpt").exists());
    assert!(out.join("train_report.json").exists());

    let cv_stdout = run(&["cv", "--folds", "4", "--epochs", "25"]);
    assert!(cv_stdout.contains("mean AUC"), "{cv_stdout}");

    run(&["explain", "--n-perm", "60"]);
    for file in [
        "shapley.csv",
        "ranking_A.csv",
        "ranking_B.csv",
        "ranking_C.csv",
        "composite_scores.csv",
    ] {
        assert!(out.join(file).exists(), "{file} missing");
    }

    // the chain step reads composites from shapley.csv without retraining
    // the classifier (no checkpoint write happens here)
    let before = read(&out.join("model.ckpt"));
    let chain_stdout = run(&["chain", "--horizons", "7", "--max-epochs", "12"]);
    assert!(chain_stdout.contains("augmented"), "{chain_stdout}");
    assert!(out.join("forecast_report.json").exists());
    assert!(out.join("forecast_summary.csv").exists());
    assert_eq!(before, read(&out.join("model.ckpt")));

    // summary rows: one base and one augmented line per chain
    let summary = String::from_utf8(read(&out.join("forecast_summary.csv"))).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3 * 2, "{summary}");
}

#[test]
fn reports_embed_seed_and_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    for args in [
        vec!["synth", "--districts", "10,8,6"],
        vec!["train", "--epochs", "10"],
    ] {
        let status = sesnet()
            .args(&args)
            .args(["--seed", "19", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let report: serde_json::Value =
        serde_json::from_slice(&read(&out.join("train_report.json"))).unwrap();
    assert_eq!(report["seed"], 19);
    assert!(report["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn missing_inputs_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nothing-here");
    let output = sesnet()
        .args(["train", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&output.stderr).is_empty());
}

#[test]
fn config_file_sets_values_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        r#"
seed = 5

[synth]
district_sizes = [3, 3, 3]
"#,
    )
    .unwrap();
    // file alone: 9 buildings
    let status = sesnet()
        .args(["synth", "--config"])
        .arg(&config_path)
        .args(["--out"])
        .arg(&out_a)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(line_count(&out_a.join("features.csv")), 10);
    // flag overrides the file
    let status = sesnet()
        .args(["synth", "--config"])
        .arg(&config_path)
        .args(["--districts", "2,2,2", "--out"])
        .arg(&out_b)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(line_count(&out_b.join("features.csv")), 7);
}
