use std::fs;
use std::path::Path;
use std::process::Command as Process;

use feff_cli::{run_command, write_csv, Command, Field, Table, Verb};

fn feff(args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_feff"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_matrix(path: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().skip(1).map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn significance_of_builtin_l() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_command(&Command::new(Verb::Significance, "L", dir.path())).unwrap();
    let v = read_matrix(&dir.path().join("significance.csv"));
    assert!((v[0][0] - 1.23).abs() <= 0.01);
    assert!((v[1][0] - 1.37).abs() <= 0.01);
    let bound: f64 = out
        .report
        .lines()
        .find_map(|l| l.strip_prefix("row-sum bound "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(bound < 1.0);
}

#[test]
fn solve_fixture_matches_rational_matrices() {
    let dir = tempfile::tempdir().unwrap();
    run_command(&Command::new(Verb::Solve, "B", dir.path())).unwrap();
    let t = 0.08 / 3.0;
    let q1 = [[2.0 * t, t, 0.0], [t, t, t], [0.0, t, 2.0 * t]];
    let s = 0.08 / 6.0;
    let q2 = [[5.0 * s, 0.0, s], [0.0, 0.08, 0.0], [s, 0.0, 5.0 * s]];
    for (file, want) in [
        ("min_distance_diversified.csv", q1),
        ("min_distance_specialized.csv", q2),
    ] {
        let got = read_matrix(&dir.path().join(file));
        for k in 0..3 {
            for i in 0..3 {
                assert!((got[k][i] - want[k][i]).abs() < 1e-12, "{file} [{k},{i}]");
            }
        }
    }
}

#[test]
fn negative_variance_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let out = feff(&["validate", "-s", "L", "--set", "assets.sigma2.3=-0.1", "-o", o]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: VALIDATION_SIGMA:"), "{err}");
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn missing_file_and_bad_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let out = feff(&["solve", "-s", "does-not-exist.json", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let out = feff(&["sweep", "--parameter", "sigma", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn partial_outputs_are_removed_on_failure() {
    let dir = tempfile::tempdir().unwrap();
    // a directory where a later output file should go
    fs::create_dir(dir.path().join("null_basis.csv")).unwrap();
    let out = feff(&["solve", "-s", "L", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(!dir.path().join("particular.csv").exists());
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error: IO_ERROR:"));
}

#[test]
fn sweep_tables_have_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = feff(&["sweep", "--parameter", "mu2", "-o", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("sweep_mu2.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("param,q11,q21,distance"));
    assert_eq!(text.lines().count(), 202);
    assert!(!text.contains('\r'));
}

#[test]
fn simulate_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, workers) in [(&a, "1"), (&b, "3")] {
        let out = feff(&[
            "simulate", "-s", "I", "--set", "run.samples=5000", "--seed", "7", "--workers", workers,
            "-o", dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 9);
    for n in names {
        assert_eq!(
            fs::read(a.path().join(&n)).unwrap(),
            fs::read(b.path().join(&n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn empty_table_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.csv");
    write_csv(&Table::new(["a", "b"]), &path).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), "a,b\n");
}

#[test]
fn reals_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let xs = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE];
    let mut t = Table::new(["x"]);
    for x in xs {
        t.push(vec![Field::Real(x)]);
    }
    write_csv(&t, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    for (line, x) in text.lines().skip(1).zip(xs) {
        assert_eq!(line.parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
    let mut bad = Table::new(["x", "y"]);
    bad.push(vec![Field::Empty]);
    assert!(write_csv(&bad, &path).is_err());
}

#[test]
fn liquidation_prefers_most_liquid() {
    let dir = tempfile::tempdir().unwrap();
    run_command(&Command::new(Verb::Liquidation, "H", dir.path())).unwrap();
    let mut r = csv::Reader::from_path(dir.path().join("liquidation.csv")).unwrap();
    let msd: Vec<f64> = r.records().map(|x| x.unwrap()[1].parse().unwrap()).collect();
    assert!(msd[0] <= msd[1]);
}
