use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infexplore")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("summary JSON on stdout")
}

#[test]
fn fixed_budget_smoke_run_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let out = run(&[
        "fixed-budget",
        "--reservoir",
        "uniform:0,1",
        "--alpha",
        "0.9",
        "--beta",
        "0.8",
        "--budget",
        "100000",
        "--trials",
        "500",
        "--seed",
        "7",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trial,seed,true_mean,samples,arms,success,ns"));
    assert_eq!(lines.count(), 500);
    let summary = stdout_json(&out);
    assert_eq!(summary["trials"], 500);
    assert!(summary["success_rate"].as_f64().unwrap() > 0.9);
}

#[test]
fn missing_budget_is_a_usage_error() {
    let out = run(&["fixed-budget", "--alpha", "0.9", "--beta", "0.8"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn malformed_flags_are_usage_errors() {
    assert_eq!(run(&["fixed-budget", "--budget", "ten"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-mode"]).status.code(), Some(2));
    let bad_reservoir = run(&["fixed-confidence", "--reservoir", "uniform:0,x", "--eta", "0.1", "--eps", "0.1", "--delta", "0.1"]);
    assert_eq!(bad_reservoir.status.code(), Some(2));
}

#[test]
fn sweep_prints_one_summary_per_value() {
    let out = run(&[
        "sweep",
        "--mode",
        "fixed-budget",
        "--param",
        "budget",
        "--values",
        "1e4,1e5,1e6",
        "--alpha",
        "0.9",
        "--beta",
        "0.8",
        "--trials",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let values: Vec<f64> = rows.iter().map(|r| r["value"].as_f64().unwrap()).collect();
    assert_eq!(values, vec![1e4, 1e5, 1e6]);
    for r in &rows {
        assert_eq!(r["summary"]["trials"], 4);
    }
}

#[test]
fn trace_and_json_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let json = dir.path().join("r.json");
    let out = run(&[
        "fixed-budget",
        "--alpha",
        "0.9",
        "--beta",
        "0.8",
        "--budget",
        "1e4",
        "--trials",
        "3",
        "--format",
        "json",
        "--out",
        json.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 3);
    let events = std::fs::read_to_string(&trace).unwrap();
    assert!(events.lines().count() > 0);
    for line in events.lines() {
        let ev: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(ev["decision"].is_string());
    }
}

#[test]
fn adversary_mode_reports_costs() {
    let out = run(&[
        "adversary", "--alpha", "0.6", "--beta", "0.4", "--eta", "0.3", "--rho", "0.25", "--budget", "1000", "--trials", "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert!(summary["adversary"]["mean_cost"].as_f64().unwrap() > 0.0);
}
