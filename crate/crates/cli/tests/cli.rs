use std::path::Path;
use std::process::Command;
use std::sync::Mutex;

use tpsqli::scan::{run_scan, ScanOptions};
use tpsqli_core::store::load_feedback;
use tpsqli_core::{Risk, Technique};
use tpsqli_net::sim::{scripted_latency, serve, Scenario, SimHandle};
use url::Url;

/// Timing-based tests share the machine; run them one at a time.
static TIMED: Mutex<()> = Mutex::new(());

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tpsqli"))
}

fn r1(scale: f64) -> SimHandle {
    serve(scripted_latency(&Scenario::bundled("r1-analog").unwrap(), scale), 0).unwrap()
}

fn user_point(sim: &SimHandle) -> String {
    format!("POST {}login#user", sim.base_url())
}

fn run(args: &[&str]) -> i32 {
    let mut all = vec!["tpsqli"];
    all.extend_from_slice(args);
    tpsqli::run(all)
}

#[test]
fn missing_url_is_a_usage_error() {
    let out = bin().arg("scan").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--url"));
}

#[test]
fn help_exits_zero() {
    for args in [&["--help"][..], &["scan", "--help"]] {
        let out = bin().args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage: tpsqli"));
    }
}

#[test]
fn remote_hosts_need_consent() {
    let dir = tempfile::tempdir().unwrap();
    let fb = dir.path().join("fb.json");
    let out = bin()
        .args(["scan", "--url", "http://192.0.2.10/", "--feedback"])
        .arg(&fb)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--i-own-this-target"));
    assert!(!fb.exists());
}

#[test]
fn loopback_detection() {
    for (url, local) in [
        ("http://127.0.0.1:8080/", true),
        ("http://localhost/", true),
        ("http://[::1]/", true),
        ("http://10.0.0.1/", false),
        ("https://example.com/", false),
    ] {
        assert_eq!(tpsqli::is_loopback(&Url::parse(url).unwrap()), local, "{url}");
    }
}

#[test]
fn scan_reports_one_time_based_finding_then_leads_with_it() {
    let _t = TIMED.lock().unwrap_or_else(|e| e.into_inner());
    let sim = r1(0.1);
    let dir = tempfile::tempdir().unwrap();
    let fb = dir.path().join("fb.json");
    let report = dir.path().join("out");
    let args = |fb: &Path, report: &Path| {
        vec![
            "scan".to_string(),
            "--url".into(),
            sim.base_url(),
            "--depth".into(),
            "1".into(),
            "--feedback".into(),
            fb.display().to_string(),
            "--report".into(),
            report.display().to_string(),
            "--delay-scale".into(),
            "0.1".into(),
        ]
    };

    let out = bin().args(args(&fb, &report)).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(report.join("report.txt")).unwrap();
    assert!(text.contains("vulnerabilities: 1"), "{text}");
    assert!(text.contains("[T] Time-based blind"), "{text}");
    let csv = std::fs::read_to_string(report.join("report.csv")).unwrap();
    assert!(csv.contains(",T,T1,"), "{csv}");

    let store = load_feedback(&fb).unwrap();
    let profile = store.profile(&user_point(&sim)).unwrap();
    assert!(*profile.is_exploit.get(Technique::TimeBlind));
    assert_eq!(profile.payload_risks.get("T1"), Some(&Risk::HIGH));

    let out = bin().args(args(&fb, &report)).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().find(|l| l.contains("login#user")).unwrap();
    assert!(line.contains("order T"), "{line}");

    let store = load_feedback(&fb).unwrap();
    assert_eq!(store.history.len(), 4);
    assert!(store.history[2..].iter().any(|h| h.digest.order.starts_with('T')));
}

#[test]
fn report_count_matches_coverage_curve() {
    let _t = TIMED.lock().unwrap_or_else(|e| e.into_inner());
    let scenario = scripted_latency(&Scenario::bundled("r8-analog").unwrap(), 0.05);
    let sim = serve(scenario, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut opts = ScanOptions::new(Url::parse(&sim.base_url()).unwrap(), dir.path().join("fb.json"));
    opts.delay_scale = 0.05;
    let outcome = run_scan(&opts).unwrap();
    let found = outcome.report.vulnerabilities.len();
    assert!(found > 1);
    assert_eq!(outcome.coverage.last().map(|(_, k)| *k), Some(found));
    for w in outcome.coverage.windows(2) {
        assert!(w[0].0 <= w[1].0 && w[0].1 < w[1].1);
    }
}

#[test]
fn feedback_env_var_sets_the_default_path() {
    let _t = TIMED.lock().unwrap_or_else(|e| e.into_inner());
    let sim = serve(Scenario::bundled("r4-analog").unwrap(), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let fb = dir.path().join("from-env.json");
    let out = bin()
        .current_dir(dir.path())
        .env("TPSQLI_FEEDBACK", &fb)
        .args([
            "scan",
            "--url",
            &sim.base_url(),
            "--depth",
            "0",
            "--delay-scale",
            "0.05",
        ])
        .output()
        .unwrap();
    assert!(
        matches!(out.status.code(), Some(0 | 2)),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(fb.exists());
    assert!(!dir.path().join("feedback.json").exists());
}

#[test]
fn weights_command_prints_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("rounds.csv");
    std::fs::write(
        &records,
        "round,technique,succeeded,time_s\n\
         1,B,true,2\n1,E,false,3\n1,U,true,4\n1,S,false,1\n1,T,false,1\n1,Q,false,1\n",
    )
    .unwrap();
    let out = bin().arg("weights").arg(&records).arg("--csv").output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let weight = |letter: &str| -> f64 {
        let line = stdout.lines().find(|l| l.starts_with(&format!("{letter},"))).unwrap();
        line.rsplit(',').next().unwrap().parse().unwrap()
    };
    assert_eq!(weight("B"), 4.0);
    assert_eq!(weight("E"), 0.0);
    assert_eq!(weight("U"), 2.0);

    let out = bin().arg("weights").arg(&records).output().unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains("order: BUESTQ"));
}

#[test]
fn bad_record_file_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("bad.csv");
    std::fs::write(&records, "round,technique,succeeded,time_s\n1,X,true,2\n").unwrap();
    let out = bin().arg("weights").arg(&records).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn eval_writes_tables_and_prioritized_is_faster() {
    let _t = TIMED.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("eval");
    let code = run(&[
        "eval",
        "--scenario",
        "r1-analog",
        "--runs",
        "3",
        "--time-rounds",
        "1",
        "--latency-scale",
        "0.05",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    for f in ["summary.csv", "fpm.csv", "coverage.csv"] {
        let text = std::fs::read_to_string(out_dir.join(f)).unwrap();
        assert!(text.starts_with("target,method,run,metric,value\n"), "{f}");
    }
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let z: f64 = summary
        .lines()
        .find(|l| l.contains("login#user") && l.ends_with(|c: char| c.is_ascii_digit()) && l.contains(",z,"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(z < -tpsqli_core::metrics::Z_CRITICAL_95, "Z = {z}");
    let rounds: Vec<_> = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("rounds-"))
        .collect();
    assert_eq!(rounds.len(), 2);
}

#[test]
fn eval_rejects_a_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&[
        "eval",
        "--scenario",
        "r4-analog",
        "--runs",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn unknown_scenario_is_an_error() {
    let out = bin()
        .args(["sim", "--scenario", "no-such-thing", "--port", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
