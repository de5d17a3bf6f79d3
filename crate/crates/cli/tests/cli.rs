use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use oscille_cli::report::{rates_csv, write_report};
use oscille_core::field::{preset_coefficient, Preset};
use oscille_core::study::ConvergenceReport;
use oscille_core::{BoundarySpec, Scenario};

fn oscille(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oscille")).args(args).output().expect("binary runs")
}

const SMALL: &str = r#"{
    "field": {"preset": "Sine1D", "params": [2, 1], "dim": 1},
    "bc": {"kind": "Dirichlet"},
    "p": 2, "s": 1, "s_plus": 1,
    "epsilons": [0.125, 0.0625, 0.03125],
    "points_per_period": 16,
    "loads": ["Unit", "Sine"]
}"#;

fn write_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    fs::write(&path, SMALL).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn cell_prints_the_harmonic_mean() {
    let out = oscille(&["cell", "--preset", "Sine1D", "--params", "2,1", "--m", "256"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().find(|l| l.starts_with("A0 = [")).unwrap();
    let v: f64 = line.trim_start_matches("A0 = [").trim_end_matches(']').parse().unwrap();
    assert!((v - 3f64.sqrt()).abs() < 1e-4, "{v}");
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = oscille(&["study", "--out", "somewhere"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = oscille(&["study", "--config", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = oscille(&["cell", "--preset", "Nope", "--params", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn study_writes_deterministic_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let res = oscille(&["study", "--config", &cfg, "--out", out.to_str().unwrap(), "--plot"]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let csv_a = fs::read_to_string(a.join("rates.csv")).unwrap();
    assert_eq!(csv_a, fs::read_to_string(b.join("rates.csv")).unwrap());
    let mut lines = csv_a.lines();
    assert_eq!(lines.next(), Some("target,eps,h,error,slope,verdict"));
    // four targets (no interior margin) times three ε values
    assert_eq!(lines.count(), 12);
    assert!(a.join("summary.txt").exists());
    let svgs = fs::read_dir(&a).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg")).count();
    assert_eq!(svgs, 4);
}

#[test]
fn overrides_change_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("o");
    let res = oscille(&[
        "study", "--config", &cfg, "--out", out.to_str().unwrap(), "--eps", "0.25,0.125,0.0625,0.03125", "--ppp", "8",
    ]);
    // ε = 1/4 is pre-asymptotic, so a FAIL verdict is a legitimate outcome
    assert!(matches!(res.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("rates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 4);
    assert!(csv.contains("Lp,2.50000000000e-1,3.12500000000e-2,"));
}

#[test]
fn suites_report_through_the_exit_code() {
    let res = oscille(&["suite-smoothing", "--h", "0.001953125"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stdout));
    let res = oscille(&["suite-strip"]);
    assert!(String::from_utf8_lossy(&res.stdout).contains("spread"));
    let res = oscille(&["audit", "--preset", "SineProduct2D", "--params", "2,1", "--seed", "3"]);
    assert_eq!(res.status.code(), Some(0));
}

#[test]
fn empty_target_list_gives_a_header_only_csv() {
    let field = preset_coefficient(Preset::Sine1D, &[2.0, 1.0], 1).unwrap();
    let rep = ConvergenceReport {
        scenario: Scenario::new(field, BoundarySpec::dirichlet(), vec![0.1], 8),
        targets: vec![],
        rows: vec![],
        fits: vec![],
    };
    assert_eq!(rates_csv(&rep).unwrap(), "target,eps,h,error,slope,verdict\n");
    let dir = tempfile::tempdir().unwrap();
    let files = write_report(&rep, dir.path(), true).unwrap();
    assert!(files.iter().all(|f| f.extension().is_none_or(|x| x != "svg")));
}
