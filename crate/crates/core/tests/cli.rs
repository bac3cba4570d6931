use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_offgrid-cdl");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("RUST_LOG").output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn synth_defaults_and_byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["synth", "--out", arg(&a), "--seed", "5"]);
    ok(&["synth", "--out", arg(&b), "--seed", "5"]);
    let meta = read_json(&a.join("signal.json"));
    assert_eq!(meta["length"], 10000);
    for f in ["signal.f64", "clean.f64", "templates.f64", "events.csv", "synth_summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read(a.join("signal.f64")).unwrap().len(), 8 * 10000);
}

#[test]
fn invalid_config_and_unknown_method_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"signal": {"duration": 0.0}}"#).unwrap();
    let out = run(&["synth", "--config", arg(&cfg), "--out", arg(dir.path())]);
    assert!(!out.status.success());

    fs::write(&cfg, r#"{"signal": {"durations": 1.0}}"#).unwrap();
    let out = run(&["synth", "--config", arg(&cfg), "--out", arg(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));

    let out = run(&["csc", "--method", "cbp", "--out", arg(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unsupported method") && err.contains("cbp"), "{err}");
}

#[test]
fn env_override_reaches_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["synth", "--out", arg(dir.path())])
        .env("OGCDL_SIGNAL__DURATION", "0.5")
        .env("OGCDL_SIGNAL__PER_SOURCE", "4")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_json(&dir.path().join("signal.json"))["length"], 5000);
    let events = fs::read_to_string(dir.path().join("events.csv")).unwrap();
    assert_eq!(events.lines().count(), 1 + 8);
}

#[test]
fn on_grid_noiseless_comp_has_zero_hit_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"signal": {"snr_db": null, "on_grid": true}}"#).unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--config", arg(&cfg), "--out", arg(&data), "--seed", "2"]);
    let res = dir.path().join("res");
    ok(&["csc", "--data", arg(&data), "--out", arg(&res), "--method", "comp"]);
    let report = read_json(&res.join("hit_report.json"));
    assert!(report["report"]["average_hit_error"].as_f64().unwrap() < 1e-9);
    assert_eq!(report["report"]["unmatched_true"], 0);
    let codes = fs::read_to_string(res.join("codes.csv")).unwrap();
    assert_eq!(codes.lines().next().unwrap(), "window,c,k,n,time_samples,amplitude");
}

#[test]
fn learn_trace_and_manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", arg(&data), "--seed", "8"]);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"cdl": {"max_iters": 3, "convergence_tol": 0.0}}"#).unwrap();
    let first = dir.path().join("first");
    ok(&["learn", "--config", arg(&cfg), "--data", arg(&data), "--out", arg(&first), "--K", "4"]);
    let trace = fs::read_to_string(first.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 3);
    assert!(trace.starts_with("iteration,reconstruction_error,err_0,err_1,"));

    let second = dir.path().join("second");
    ok(&["learn", "--config", arg(&first.join("learn_manifest.json")), "--out", arg(&second)]);
    for f in ["learned_templates.f64", "learn_codes.csv"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }

    ok(&["metrics", "--data", arg(&data), "--out", arg(&first)]);
    let m = read_json(&first.join("metrics.json"));
    assert_eq!(m["template_err"].as_array().unwrap().len(), 2);
    assert!((m["snr_db"].as_f64().unwrap() - 20.0).abs() < 1.0);
}

#[test]
fn bench_grid_writes_rows_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"bench": {"methods": ["cmp", "comp", "comp-slow"], "trials": 3,
            "points": [{"duration": 0.5, "n_events": 6}, {"duration": 1.0, "n_events": 6}]}}"#,
    )
    .unwrap();
    ok(&["bench", "--config", arg(&cfg), "--out", arg(dir.path()), "--threads", "1"]);
    let mut rdr = csv::Reader::from_path(dir.path().join("bench.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["method", "T_seconds", "n_events", "median_seconds", "trials"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap() > 0.0 && &r[4] == "3"));
}
