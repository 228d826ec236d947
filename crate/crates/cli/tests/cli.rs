use std::path::Path;
use std::process::{Command, Output};

fn mmbounds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmbounds"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn stationary_prints_every_model() {
    let out = mmbounds(&["--config", "table1_d", "stationary"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "model,P,K,Rtilde,iterations,residual");
    assert!(lines[1].starts_with("1,4.236"));
    assert!(lines[2].starts_with("2,1.003"));
}

#[test]
fn certify_reports_each_pair() {
    let out = mmbounds(&[
        "--config",
        "table1_c",
        "certify",
        "--gamma",
        "1.3",
        "--horizon",
        "5",
        "--terminal",
        "necessary",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.contains("definite")));
}

#[test]
fn bounds_over_a_range() {
    let out = mmbounds(&["--config", "table1_b", "bounds", "--horizon", "1..3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!(r[1] <= r[2] && r[2] <= r[3], "{r:?}");
    }
}

#[test]
fn exact_single_horizon() {
    let out = mmbounds(&[
        "--config",
        "table1_b",
        "--theta-step",
        "0.01",
        "exact",
        "--horizon",
        "2",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "2");
    let g: f64 = row[1].parse().unwrap();
    assert!((g - 1.6686).abs() < 2e-3, "{g}");
}

#[test]
fn estimate_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ys = dir.path().join("y.csv");
    std::fs::write(&ys, "y\n1.0\n-0.5\n0.25\n").unwrap();
    let out_path = dir.path().join("est.csv");
    let out = mmbounds(&[
        "--config",
        "table1_a",
        "--output",
        out_path.to_str().unwrap(),
        "estimate",
        "--gamma",
        "2",
        "--measurements",
        ys.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(out_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x_hat_1,value,theta_1,theta_2,c_1,c_2");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,0,"));
}

#[test]
fn reference_experiments_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmbounds(&[
        "--output",
        dir.path().to_str().unwrap(),
        "--theta-step",
        "0.05",
        "paper-experiments",
        "--horizon",
        "1..2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("pass"));
    for name in [
        "table1.csv",
        "table1_a.csv",
        "table1_b.csv",
        "table1_c.csv",
        "table1_d.csv",
    ] {
        assert!(Path::new(&dir.path().join(name)).exists(), "{name}");
    }
    let curves = std::fs::read_to_string(dir.path().join("table1_c.csv")).unwrap();
    assert_eq!(curves.lines().count(), 3);
}

#[test]
fn infeasible_gamma_exits_with_validation_code() {
    let out = mmbounds(&[
        "--config",
        "table1_d",
        "certify",
        "--gamma",
        "1.5",
        "--horizon",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_upper_bound_exits_with_numerical_code() {
    let out = mmbounds(&[
        "--config",
        "table1_a",
        "--cap",
        "5",
        "bounds",
        "--horizon",
        "8",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[[model]]\nF = 1\nH = 1\nQ = 1\n").unwrap();
    let out = mmbounds(&["--config", path.to_str().unwrap(), "stationary"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`R`"));
}

#[test]
fn missing_config_is_rejected() {
    let out = mmbounds(&["stationary"]);
    assert_eq!(out.status.code(), Some(2));
}
