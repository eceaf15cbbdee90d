//! End-to-end runs of the binary against the bundled fixtures.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_linearize4"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad json ({}): {}",
            e,
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("linearize4-cli-{}-{}", name, std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn example1_exits_zero_with_ten_passes() {
    let out = run(&["test", "--fixture", "example1"]);
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    let v = json(&out);
    assert_eq!(v["verdict"], "linearizable");
    let conds = v["conditions"].as_array().unwrap();
    assert_eq!(conds.len(), 10);
    assert!(conds.iter().all(|c| c["pass"] == true));
}

#[test]
fn example3_exits_one_with_failing_set() {
    let out = run(&["test", "--fixture", "example3"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["verdict"], "not_linearizable");
    let failing: Vec<&str> = v["conditions"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["id"].as_str().unwrap())
        .collect();
    assert_eq!(failing, vec!["T1.C5", "T1.C8", "T1.C10"]);
}

#[test]
fn example2_parameter_override() {
    for a in ["2", "3", "5"] {
        let out = run(&["test", "--fixture", "example2", "--param", &format!("a={}", a)]);
        assert_eq!(out.status.code(), Some(0), "a = {}", a);
    }
}

#[test]
fn example4_construct_report_shape() {
    let out = run(&["construct", "--fixture", "example4"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["conditions"].as_array().unwrap().len(), 18);
    let grid = &v["transform"]["grid"];
    assert!(grid["phi"].as_array().unwrap().len() == 41 * 41);
    assert!((v["alphaBeta"]["alphaMid"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert!((v["alphaBeta"]["betaMid"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert!(v["roundtripResidual"].as_f64().unwrap() < 1e-5);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let a = run(&["test", "--fixture", "example1", "--seed", "44"]);
    let b = run(&["test", "--fixture", "example1", "--seed", "44"]);
    assert_eq!(a.status.code(), b.status.code());
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

#[test]
fn empty_candidate_table_passes() {
    let dir = tmp_dir("empty");
    let req = dir.join("empty.json");
    std::fs::write(&req, r#"{"candidateI": {}}"#).unwrap();
    let out = run(&["test", "--input", req.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn oracle_then_test_pipeline() {
    let dir = tmp_dir("oracle");
    let table = dir.join("generated.json");
    let out = run(&[
        "oracle",
        "--phi",
        "x",
        "--psi",
        "x^2*y^2",
        "--beta",
        "1",
        "--out",
        table.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    let out = run(&["test", "--input", table.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));

    // candidate II map through the same pipe
    let table2 = dir.join("generated2.json");
    let out = run(&[
        "oracle",
        "--phi",
        "y + x",
        "--psi",
        "x",
        "--out",
        table2.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["test", "--input", table2.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn verify_subcommand_reports_residual() {
    let out = run(&[
        "verify",
        "--fixture",
        "example1",
        "--phi",
        "x",
        "--psi",
        "x^2*y^2",
        "--beta",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    let v = json(&out);
    assert!(v["roundtripResidual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn batch_mode_writes_reports_per_stem() {
    let dir = tmp_dir("batch");
    std::fs::write(dir.join("a.json"), linearize4::fixtures::EXAMPLE1).unwrap();
    std::fs::write(dir.join("b.json"), linearize4::fixtures::EXAMPLE3).unwrap();
    let outdir = tmp_dir("batch-out");
    let out = run(&[
        "test",
        "--batch",
        "--input",
        dir.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
    ]);
    // worst verdict (example3) propagates
    assert_eq!(out.status.code(), Some(1));
    assert!(outdir.join("a.report.json").exists());
    assert!(outdir.join("b.report.json").exists());
}

#[test]
fn parse_error_exits_two() {
    let dir = tmp_dir("err");
    let req = dir.join("bad.json");
    std::fs::write(&req, r#"{"rhs": "2x"}"#).unwrap();
    let out = run(&["test", "--input", req.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("column 2"), "stderr: {}", err);
}
