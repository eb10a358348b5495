use std::path::Path;
use std::process::{Command, Output};

fn symred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symred"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn detsys_matches_golden_file() {
    let golden =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/detsys_classical.txt");
    let out = symred(&["detsys", "classical"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), std::fs::read_to_string(golden).unwrap());
}

#[test]
fn reduce_prints_exact_coefficients() {
    let out = symred(&["reduce", "--example", "1"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["c1"], "3*x^2 - 6*x - 1");
    assert_eq!(v["c0"], "6*x - 8");
    assert_eq!(v["r"], "-1");
    assert_eq!(v["singular_points"][0]["exact"], "1 - 2/3*sqrt(3)");
}

#[test]
fn reduce_custom_profile() {
    let out = symred(&["reduce", "--W", "1 - x^4", "--interval", "-1", "1"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["c1"], "4*x^3");
}

#[test]
fn solve_writes_csv() {
    let out = symred(&["solve", "--example", "3", "--branch", "2"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,E0,residual"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() > 100);
    assert!(rows.iter().all(|r| r.len() == 3 && r[2] < 1e-6));
    assert!(rows
        .iter()
        .any(|r| r[0] == 1.0 && (r[1] - 0.25).abs() < 1e-15));
}

#[test]
fn anchor_at_singular_point_is_a_numeric_failure() {
    let out = symred(&[
        "solve",
        "--W",
        "1 - x^4",
        "--interval",
        "-1",
        "1",
        "--anchor",
        "x=0",
        "E=1",
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn tolerance_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_symred"))
        .args(["solve", "--example", "1"])
        .env("SYMRED_TOL", "1e-6")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let out = Command::new(env!("CARGO_BIN_EXE_symred"))
        .args(["solve", "--example", "1"])
        .env("SYMRED_TOL", "abc")
        .output()
        .unwrap();
    assert_ne!(code(&out), 0);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&symred(&["reduce"])), 2);
    assert_eq!(code(&symred(&["reduce", "--example", "9"])), 2);
    assert_eq!(
        code(&symred(&["reduce", "--W", "x^2 +", "--interval", "0", "1"])),
        2
    );
    assert_eq!(
        code(&symred(&["solve", "--W", "x^2", "--interval", "0", "1"])),
        2
    );
    assert_eq!(code(&symred(&["example", "five"])), 2);
    assert_eq!(code(&symred(&["no-such-command"])), 2);
}

#[test]
fn verify_family() {
    let out = symred(&["verify", "--family", "F6"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["pass"], true);
    let out = symred(&["verify", "--family", "F7", "--k", "0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn example_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = symred(&["example", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    for name in [
        "example2.json",
        "example2_boundary.svg",
        "example2_parameter.svg",
        "example2_branch1.csv",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("example2.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn boundary_csv() {
    let out = symred(&["boundary", "3", "--n", "3"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().count(), 5);
}
