use std::path::Path;
use std::process::{Command, Output};

fn hlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlab")).args(args).output().expect("spawn hlab")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn dim_on_z2_reports_five() {
    let out = hlab(&["dim", "--group", "Z^d:d=2", "--k", "2", "--radii", "6,8"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["result"]["dimension"], 5);
    assert_eq!(v["schema_version"], 1);
    assert!(v["constants"]["D"].as_f64().unwrap() > 1.0);
}

#[test]
fn missing_radii_is_a_config_error() {
    let out = hlab(&["dim", "--group", "Z^1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.starts_with("error kind=config exit=2:"));
}

#[test]
fn resource_limit_has_its_own_exit_code() {
    let out = hlab(&["growth", "--group", "Z^2", "--radii", "400", "--point-budget", "500"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn lamplighter_dimension_is_inconclusive() {
    let out = hlab(&["dim", "--group", "lamplighter", "--radii", "5,7,9"]);
    assert_eq!(out.status.code(), Some(4));
    let v = stdout_json(&out);
    assert_eq!(v["status"], "inconclusive");
    assert!(v["result"]["dimension"].is_null());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hit.toml");
    std::fs::write(
        &cfg,
        "task = \"hitting\"\ngroup = \"Z^1\"\nmeasure = \"simple\"\nsubgroup = \"sublattice:basis=[[2]]\"\nseed = 3\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let exact = stdout_json(&hlab(&["run", "--config", cfg]));
    assert_eq!(exact["result"]["measure"]["(0)"], 0.5);
    let mc = hlab(&["run", "--config", cfg, "--hitting-mode", "monte-carlo", "--samples", "2000"]);
    let mc = stdout_json(&mc);
    assert_eq!(mc["config"]["hitting_mode"], "monte-carlo");
    assert_eq!(mc["config"]["samples"], 2000);
}

#[test]
fn reports_are_written_and_summarised() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let csv = dir.path().join("a.csv");
    let run = |out: &Path, k: &str| {
        let st = hlab(&[
            "dim", "--group", "Z^1", "--k", k, "--radii", "6,8",
            "--out", out.to_str().unwrap(), "--csv", csv.to_str().unwrap(),
        ]);
        assert_eq!(st.status.code(), Some(0));
    };
    run(&a, "1");
    run(&b, "2");
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("r_fit,"));
    let out = hlab(&["summary", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().nth(1).unwrap().starts_with("dim,Z^d:d=1,"));

    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&b).unwrap()).unwrap();
    v["schema_version"] = 9.into();
    std::fs::write(&b, v.to_string()).unwrap();
    let out = hlab(&["summary", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("b.json"));
}

#[test]
fn csv_format_goes_to_stdout() {
    let out = hlab(&["growth", "--group", "Z^1", "--radii", "3", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("R,count,haar_volume,doubling_ratio"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn same_seed_same_bytes_across_thread_counts() {
    let args = |t: &'static str| {
        vec!["poincare", "--group", "Z^1", "--radii", "4", "--seed", "11", "--functions", "10", "--power", "2", "--threads", t]
    };
    let one = hlab(&args("1")).stdout;
    let four = hlab(&args("4")).stdout;
    assert!(!one.is_empty());
    assert_eq!(one, four);
}
