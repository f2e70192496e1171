use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const WORKED: &str = r#"{"system": {"n_servers": 3, "lambda_per_server": 0.1,
  "dist": {"x_m": 1, "x_M": 10, "p_small": 0.9},
  "profile": {"family": "perfect_knowledge"}},
 "sim": {"jobs": 20000, "seed": 3, "replications": 4}}"#;

fn lbtest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbtest")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

/// Data rows of a sweep CSV as (sigma, efficiency, marker).
fn sweep_rows(csv: &str) -> Vec<(f64, f64, bool)> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[3].parse().unwrap(), f[4] == "1")
        })
        .collect()
}

#[test]
fn eval_reproduces_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), WORKED);
    let o = lbtest(&["--config", &cfg, "eval", "--c", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["total"].as_f64().unwrap() - 0.2546737).abs() < 1e-6);
    assert_eq!(v["scheduler_sojourn"].as_f64(), Some(0.0));
}

#[test]
fn unstable_scheduler_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), WORKED);
    // Lambda = 0.3, so sigma = 4 overloads the scheduler.
    let o = lbtest(&["--config", &cfg, "eval", "--c", "1", "--sigma", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scheduler unstable"), "{}", stderr(&o));
}

#[test]
fn unstable_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &WORKED.replace("\"lambda_per_server\": 0.1", "\"rho\": 1.2"));
    let o = lbtest(&["--config", &cfg, "eval", "--c", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"system": {"n_servers": 3, "rho": 0.5}}"#);
    let o = lbtest(&["--config", &cfg, "eval", "--c", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));

    let o = lbtest(&["eval", "--c", "1"]);
    assert_eq!(o.status.code(), Some(1), "missing --config");
    let o = lbtest(&["--config", &cfg, "eval"]);
    assert_eq!(o.status.code(), Some(1), "missing --c");
}

#[test]
fn optimize_and_simulate_agree_with_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), WORKED);
    let o = lbtest(&["--config", &cfg, "optimize"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["efficiency_opt"].as_f64().unwrap() <= 1.0 + 1e-12);
    assert!(v["sigma_star"].as_f64().unwrap() > 0.0);

    let o = lbtest(&["--config", &cfg, "--threads", "2", "simulate", "--c", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let (m, se) = (v["mean_total"]["mean"].as_f64().unwrap(), v["mean_total"]["std_err"].as_f64().unwrap());
    assert!((m - 0.2546737).abs() <= 4.0 * se, "{m} +- {se}");
}

#[test]
fn simulation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), WORKED);
    let args = ["--config", cfg.as_str(), "simulate", "--c", "1", "--sigma", "0.5", "--jobs", "5000"];
    let a = lbtest(&args);
    let b = lbtest(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = lbtest(&[&args[..], &["--seed", "99"]].concat());
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn verify_suites() {
    let o = lbtest(&["verify", "--suite", "bounds"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("PASS"));
    assert!(!stdout(&o).contains("FAIL"));

    let o = lbtest(&["verify", "--suite", "nosuch"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_workload_study_dips_below_one() {
    let o = lbtest(&["sweep", "--preset", "figure2", "--workload", "p80", "--N", "100", "--rho", "0.8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.contains("# E[X]=128"));
    let rows = sweep_rows(&csv);
    assert_eq!(rows[0], (0.0, 1.0, false));
    let min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    assert!(min < 0.5, "min efficiency {min}");
    let star: Vec<_> = rows.iter().filter(|r| r.2).collect();
    assert_eq!(star.len(), 1);
    assert!(star[0].1 <= 1.1 * min, "sigma* efficiency {} vs min {min}", star[0].1);
}

#[test]
fn sweep_heavy_tail_never_gains() {
    let o = lbtest(&["sweep", "--preset", "figure1", "--beta", "2", "--N", "100", "--rho", "0.8", "--xM", "1e5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for (sigma, e, _) in sweep_rows(&stdout(&o)) {
        assert!(e >= 1.0 - 1e-9, "E({sigma}) = {e}");
    }
}

#[test]
fn empty_grid_is_an_error() {
    let o = lbtest(&["sweep", "--preset", "figure2", "--points", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error"));
}

#[test]
fn sweep_from_config_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("nested/out.csv");
    let svg = dir.path().join("out.svg");
    let mut body: Value = serde_json::from_str(WORKED).unwrap();
    body["sweep"] = serde_json::json!({"points": 20, "spacing": "linear"});
    body["output"] = serde_json::json!({"csv": csv, "svg": svg});
    let body = body.to_string();
    let cfg = write_config(dir.path(), &body);
    let o = lbtest(&["--config", &cfg, "sweep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(sweep_rows(&text).len() >= 20);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn unwritable_output_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = lbtest(&["--out", out.to_str().unwrap(), "sweep", "--preset", "figure2", "--points", "10"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn figures_workload_study() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = lbtest(&["--out", out, "figures", "--which", "2", "--points", "15"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csvs: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    assert_eq!(csvs.len(), 18);
    for w in [("p50", "282.5"), ("p20", "437"), ("p80", "128")] {
        let p = dir.path().join(format!("figure2_nfs_{}_rho0.8.csv", w.0));
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains(&format!("# E[X]={}", w.1)), "{}", p.display());
        assert!(dir.path().join(format!("figure2_nfs_{}_rho0.8.svg", w.0)).exists());
    }

    // byte-identical rerun
    let again = tempfile::tempdir().unwrap();
    let o = lbtest(&["--out", again.path().to_str().unwrap(), "figures", "--which", "2", "--points", "15"]);
    assert!(o.status.success());
    for p in csvs {
        let name = p.file_name().unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(again.path().join(name)).unwrap());
    }
}

#[test]
fn figures_heavy_tail_study_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let o = lbtest(&["--out", dir.path().to_str().unwrap(), "figures", "--which", "1", "--points", "15"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("stability rejections: 0"), "{}", stderr(&o));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 36);
}

#[test]
fn help_exits_zero() {
    assert!(lbtest(&["--help"]).status.success());
    assert_eq!(lbtest(&["frobnicate"]).status.code(), Some(1));
}
