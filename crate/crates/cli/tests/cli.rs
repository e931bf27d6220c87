//! End-to-end runs of the `riffle` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn riffle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riffle"))
        .args(args)
        .output()
        .expect("failed to spawn riffle")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("riffle-cli-test-{}-{}", tag, std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn full_pipeline() {
    let dir = workdir("pipeline");
    let data = dir.join("train.rankings");
    let truth = dir.join("truth.json");
    let model = dir.join("learned.json");

    let out = riffle(&[
        "synth",
        "--n", "6",
        "--shape", "thin",
        "--k", "2",
        "--count", "2000",
        "--seed", "7",
        "--out", data.to_str().unwrap(),
        "--model-out", truth.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "synth: {}", String::from_utf8_lossy(&out.stderr));

    let out = riffle(&[
        "learn-structure",
        "--in", data.to_str().unwrap(),
        "--k", "2",
        "--out", model.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "learn: {}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(doc["format"], "riffle-model");

    let out = riffle(&["evaluate", "--model", model.to_str().unwrap(), "--in", data.to_str().unwrap()]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ll = report["mean_log_likelihood"].as_f64().unwrap();
    assert!(ll < 0.0 && ll > -f64::ln(720.0) , "mean log-likelihood {}", ll);

    let refit = dir.join("refit.json");
    let out = riffle(&[
        "fit-params",
        "--in", data.to_str().unwrap(),
        "--model", model.to_str().unwrap(),
        "--out", refit.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "fit-params: {}", String::from_utf8_lossy(&out.stderr));

    let sampled = dir.join("sampled.rankings");
    let out = riffle(&[
        "sample",
        "--model", refit.to_str().unwrap(),
        "--count", "50",
        "--seed", "1",
        "--out", sampled.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let body = std::fs::read_to_string(&sampled).unwrap();
    assert!(body.starts_with("n=6"));

    let out = riffle(&["marginals", "--in", sampled.to_str().unwrap(), "--order", "1"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).lines().count() >= 6);

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn fourier_check_reports_tiny_deviation() {
    let out = riffle(&["fourier-check", "--n", "5", "--alpha", "0.3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("max_deviation"));
}

#[test]
fn bootstrap_emits_csv() {
    let dir = workdir("bootstrap");
    let data = dir.join("train.rankings");
    assert!(riffle(&[
        "synth", "--n", "5", "--shape", "thin", "--k", "1",
        "--count", "300", "--seed", "3", "--out", data.to_str().unwrap(),
    ])
    .status
    .success());
    let out = riffle(&[
        "bootstrap",
        "--in", data.to_str().unwrap(),
        "--bootstrap-B", "10",
        "--sizes", "100,300",
        "--k", "1",
        "--seed", "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "size,exact_tree,top_partition,leaf_sets");
    assert_eq!(lines.count(), 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn malformed_input_is_a_clean_error() {
    let dir = workdir("malformed");
    let bad = dir.join("bad.rankings");
    std::fs::write(&bad, "n=3 notation=ranking counted=false\n1 1 2\n").unwrap();
    let out = riffle(&["learn-structure", "--in", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:"), "stderr: {}", err);
    assert!(err.contains("line 2"), "stderr: {}", err);

    let missing = riffle(&["evaluate", "--model", "/nonexistent.json", "--in", bad.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));

    let out = riffle(&["marginals", "--in", bad.to_str().unwrap(), "--order", "3"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}
