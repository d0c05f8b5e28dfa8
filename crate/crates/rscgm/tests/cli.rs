//! End-to-end checks of the command-line binary: every subcommand plus the
//! exit-code contract.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rscgm"))
}

fn write_ratings(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("ratings.csv");
    let mut lines = String::new();
    // deterministic block structure so the correlation graphs are non-empty
    for u in 0..12 {
        for j in 0..10 {
            if (u + j) % 3 != 0 {
                let value = 1 + ((u * 2 + j) % 5);
                lines.push_str(&format!("u{u},i{j},{value}\n"));
            }
        }
    }
    fs::write(&path, lines).unwrap();
    path
}

#[test]
fn build_graph_train_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = write_ratings(dir.path());
    let ug = dir.path().join("user.graph");
    let ig = dir.path().join("item.graph");

    for (entity, out) in [("user", &ug), ("item", &ig)] {
        let status = bin()
            .args([
                "build-graph",
                "--ratings",
                ratings.to_str().unwrap(),
                "--entity",
                entity,
                "--source",
                "rating-pcc",
                "--min-overlap",
                "2",
                "--output",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        let text = fs::read_to_string(out).unwrap();
        assert!(text.starts_with(&format!("{entity} ")));
    }

    let ckpt = dir.path().join("model.bin");
    let report = dir.path().join("train.json");
    let config = dir.path().join("hp.json");
    fs::write(&config, r#"{"factors": 3, "max_iters": 10, "lambda_f": 0.1, "lambda_g": 0.1}"#)
        .unwrap();
    let out = bin()
        .args([
            "train",
            "--ratings",
            ratings.to_str().unwrap(),
            "--user-graph",
            ug.to_str().unwrap(),
            "--item-graph",
            ig.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--output",
            ckpt.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ckpt.exists());
    let report_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(report_json["objective_trace"].as_array().unwrap().len() >= 2);

    let out = bin()
        .args([
            "evaluate",
            "--ratings",
            ratings.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--train-ratings",
            ratings.to_str().unwrap(),
            "--ranking-m",
            "3",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert!(metrics["mae"].as_f64().unwrap() >= 0.0);
    assert!(metrics["rmse"].as_f64().unwrap() >= metrics["mae"].as_f64().unwrap() - 1e-9);
}

#[test]
fn pairwise_training_flag() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = write_ratings(dir.path());
    let ug = dir.path().join("user.graph");
    let ig = dir.path().join("item.graph");
    for (entity, out) in [("user", &ug), ("item", &ig)] {
        assert!(bin()
            .args([
                "build-graph",
                "--ratings",
                ratings.to_str().unwrap(),
                "--entity",
                entity,
                "--min-overlap",
                "2",
                "--output",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap()
            .success());
    }
    let ckpt = dir.path().join("pairwise.bin");
    let config = dir.path().join("hp.json");
    fs::write(&config, r#"{"factors": 2, "max_iters": 3, "lambda_p": 0.1}"#).unwrap();
    let out = bin()
        .args([
            "train",
            "--ratings",
            ratings.to_str().unwrap(),
            "--user-graph",
            ug.to_str().unwrap(),
            "--item-graph",
            ig.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--pairwise",
            "--output",
            ckpt.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ckpt.exists());
}

#[test]
fn compare_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = write_ratings(dir.path());
    let config = dir.path().join("compare.json");
    fs::write(
        &config,
        r#"{
            "dataset": "synthetic",
            "methods": ["bmf", "icf", "harmonic"],
            "sparsity_levels": [0.0],
            "folds": 2,
            "min_overlap": 2,
            "hyperparameters": {"factors": 2, "max_iters": 5}
        }"#,
    )
    .unwrap();
    let report = dir.path().join("report.json");
    let csv = dir.path().join("report.csv");
    let out = bin()
        .args([
            "compare",
            "--ratings",
            ratings.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--output",
            report.to_str().unwrap(),
            "--csv",
            csv.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("method"));
    assert!(table.contains("bmf"));
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["cells"].as_array().unwrap().len(), 6);
    let csv_text = fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("dataset,sparsity,method,fold,metric,value,seconds"));
}

#[test]
fn sample_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = write_ratings(dir.path());
    let out_path = dir.path().join("sampled.csv");
    let out = bin()
        .args([
            "sample",
            "--ratings",
            ratings.to_str().unwrap(),
            "--remove-fraction",
            "0.5",
            "--seed",
            "9",
            "--output",
            out_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let original = fs::read_to_string(&ratings).unwrap().lines().count();
    let kept = fs::read_to_string(&out_path).unwrap().lines().count();
    assert_eq!(kept, original - (original as f64 * 0.5).round() as usize);
}

#[test]
fn exit_codes() {
    // missing input file: IO error -> 1
    let status = bin()
        .args([
            "build-graph",
            "--ratings",
            "/nonexistent/ratings.csv",
            "--entity",
            "user",
            "--output",
            "/tmp/out.graph",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // bad config (unknown field) -> 2
    let dir = tempfile::tempdir().unwrap();
    let ratings = write_ratings(dir.path());
    let ug = dir.path().join("user.graph");
    let ig = dir.path().join("item.graph");
    for (entity, out) in [("user", &ug), ("item", &ig)] {
        assert!(bin()
            .args([
                "build-graph",
                "--ratings",
                ratings.to_str().unwrap(),
                "--entity",
                entity,
                "--min-overlap",
                "2",
                "--output",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap()
            .success());
    }
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"factors": 2, "no_such_knob": 1}"#).unwrap();
    let status = bin()
        .args([
            "train",
            "--ratings",
            ratings.to_str().unwrap(),
            "--user-graph",
            ug.to_str().unwrap(),
            "--item-graph",
            ig.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--output",
            dir.path().join("x.bin").to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // invalid hyperparameter values -> 2
    let config2 = dir.path().join("bad2.json");
    fs::write(&config2, r#"{"factors": 2, "alpha": 7.0}"#).unwrap();
    let status = bin()
        .args([
            "train",
            "--ratings",
            ratings.to_str().unwrap(),
            "--user-graph",
            ug.to_str().unwrap(),
            "--item-graph",
            ig.to_str().unwrap(),
            "--config",
            config2.to_str().unwrap(),
            "--output",
            dir.path().join("y.bin").to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
