//! Black-box tests of the `mdfocus` binary (each invocation hosts its own
//! in-process service).

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mdfocus"))
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

fn base_config(dir: &Path, threshold: Option<f64>) -> std::path::PathBuf {
    let plan = match threshold {
        Some(c) => format!(
            r#","threshold_plan": {{
                "provenance": {{"mode": "user"}},
                "entries": [{{"stat": {{"kind": "dense"}}, "rule": {{"fixed": {{"c": {c}}}}}}}]
            }}"#
        ),
        None => String::new(),
    };
    let config = format!(
        r#"{{
            "model": {{"family": "gaussian-mean", "p": 1}},
            "statistics": [{{"kind": "dense"}}],
            "prechange": {{"known": {{"natural": [0.0]}}}}{plan}
        }}"#
    );
    let path = dir.join("config.json");
    write(&path, &config);
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout_lines(output: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&output.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("valid JSONL"))
        .collect()
}

#[test]
fn zeros_run_to_end_of_stream() {
    let dir = tempfile::tempdir().unwrap();
    let config = base_config(dir.path(), Some(1.0));
    let data = dir.path().join("zeros.csv");
    write(&data, "0\n0\n0\n");
    let out = run(bin().arg("detect").arg(&data).arg("--config").arg(&config));
    assert!(out.status.success());
    let lines = stdout_lines(&out);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["stopped"], serde_json::json!(false));
    assert_eq!(lines[0]["n"], serde_json::json!(3));
}

#[test]
fn unit_steps_stop_at_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = base_config(dir.path(), Some(2.0));
    let data = dir.path().join("ones.csv");
    write(&data, "1\n1\n5\n");
    let out = run(bin().arg("detect").arg(&data).arg("--config").arg(&config));
    assert!(out.status.success());
    let lines = stdout_lines(&out);
    let stop = lines.last().unwrap();
    assert_eq!(stop["stopped"], serde_json::json!(true));
    assert_eq!(stop["n"], serde_json::json!(2));
    assert_eq!(stop["tau_hat"], serde_json::json!(0));
    assert!((stop["value"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn engines_produce_identical_stop_records() {
    let dir = tempfile::tempdir().unwrap();
    let config = base_config(dir.path(), Some(8.0));
    let data = dir.path().join("stream.csv");
    let mut rows = String::new();
    let mut state = 41u64;
    for i in 0..400 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let u = ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
        let shift = if i >= 300 { 1.5 } else { 0.0 };
        rows.push_str(&format!("{}\n", u + shift));
    }
    write(&data, &rows);
    let collect = |engine: &str| {
        let out = run(bin()
            .arg("detect")
            .arg(&data)
            .arg("--config")
            .arg(&config)
            .arg("--engine")
            .arg(engine));
        assert!(out.status.success(), "engine {engine}");
        stdout_lines(&out).last().unwrap().clone()
    };
    let exact = collect("exact");
    let dyadic = collect("dyadic");
    assert_eq!(exact, dyadic);
}

#[test]
fn reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = base_config(dir.path(), Some(6.0));
    let data = dir.path().join("stream.csv");
    let mut rows = String::new();
    let mut state = 4242u64;
    for _ in 0..200 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        rows.push_str(&format!("{}\n", ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0));
    }
    write(&data, &rows);
    let run_once = || {
        let out = run(bin()
            .arg("detect")
            .arg(&data)
            .arg("--config")
            .arg(&config)
            .arg("--trace")
            .arg("--seed")
            .arg("7"));
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    assert_eq!(run_once(), run_once());
}

#[test]
fn exit_codes_separate_config_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();

    // Unknown config key: startup error, exit 1.
    let bad_config = dir.path().join("bad.json");
    write(&bad_config, r#"{"model": {"family": "gaussian-mean", "p": 1}, "statistics": [], "prechange": "unknown", "nope": 1}"#);
    let data = dir.path().join("d.csv");
    write(&data, "0\n");
    let out = run(bin().arg("detect").arg(&data).arg("--config").arg(&bad_config));
    assert_eq!(out.status.code(), Some(1));

    // Malformed CSV row: data error naming the line, exit 2.
    let config = base_config(dir.path(), Some(1.0));
    let bad_data = dir.path().join("bad.csv");
    write(&bad_data, "0\nnot-a-number\n");
    let out = run(bin().arg("detect").arg(&bad_data).arg("--config").arg(&config));
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");

    // Header rows are fine.
    let headered = dir.path().join("h.csv");
    write(&headered, "value\n0\n0\n");
    let out = run(bin().arg("detect").arg(&headered).arg("--config").arg(&config));
    assert!(out.status.success());
    let lines = stdout_lines(&out);
    assert_eq!(lines[0]["n"], serde_json::json!(2));
}

#[test]
fn calibrate_analytic_arl_matches_formula() {
    let out = run(bin()
        .args(["calibrate", "--mode", "analytic-arl"])
        .args(["--stats", "dense", "--p", "3", "--gamma", "5000", "--m", "1"]));
    assert!(out.status.success());
    let plan: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let c = plan["entries"][0]["rule"]["fixed"]["c"].as_f64().unwrap();
    let zeta = 4.0 * 5000.0f64.ln() + 1.0f64.ln() + 5.0 * std::f64::consts::LN_2;
    let expect = 3.0 + 2.0 * zeta + 2.0 * (3.0 * zeta).sqrt();
    assert!((c - expect).abs() < 1e-9, "c = {c}, expect {expect}");
}

#[test]
fn calibrate_monte_carlo_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = base_config(dir.path(), None);
    let run_once = || {
        let out = run(bin()
            .args(["calibrate", "--mode", "monte-carlo"])
            .arg("--config")
            .arg(&config)
            .args(["--gamma", "30", "--replicates", "10", "--seed", "3", "--stream-len", "60"]));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    assert_eq!(run_once(), run_once());
}

#[test]
fn calibrate_rejects_unsupported_combinations() {
    let out = run(bin()
        .args(["calibrate", "--mode", "analytic-fa"])
        .args(["--stats", "sum_of_max", "--p", "2", "--alpha", "0.1"]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oracle_emits_expected_columns() {
    let out = run(bin().args(["oracle", "--p", "1,2", "--n", "256,1024"]));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n,p,expected_faces,expected_vertices");
    assert_eq!(lines.count(), 4);
}

#[test]
fn experiment_hullcount_emits_records_and_summary() {
    let out = run(bin()
        .args(["experiment", "hullcount"])
        .args(["--p", "1", "--n", "128", "--replicates", "8", "--seed", "2", "--workers", "2"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scenario,replicate,n,stat,value");
    assert!(lines.iter().any(|l| l.contains("vertex_count")));
    assert!(lines.iter().any(|l| l.contains("expected_vertices")));
}

#[test]
fn edetect_scans_score_streams() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("scores.csv");
    let mut rows = String::from("score\n");
    let mut state = 5u64;
    for _ in 0..64 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let v = (((state >> 11) as f64 / (1u64 << 53) as f64) * 160.0 - 80.0).round();
        rows.push_str(&format!("{v}\n"));
    }
    write(&data, &rows);
    let out = run(bin()
        .arg("edetect")
        .arg(&data)
        .args(["--preset", "winning-rate"]));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("n,hull_count,candidates"));
    assert_eq!(text.lines().count(), 64 - 2 + 2); // header + rows for n = 2..=64
}

/// Streaming discipline: a million-row zero stream runs in bounded memory;
/// the candidate count in the trace stays at the collinear-hull size.
#[test]
fn million_row_zero_stream_keeps_bounded_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let config = base_config(dir.path(), Some(1.0));
    let data = dir.path().join("big.csv");
    let mut body = String::with_capacity(2_000_000);
    for _ in 0..1_000_000 {
        body.push_str("0\n");
    }
    write(&data, &body);
    let trace_path = dir.path().join("trace.jsonl");
    let out = run(bin()
        .arg("detect")
        .arg(&data)
        .arg("--config")
        .arg(&config)
        .arg("--trace")
        .arg("--output")
        .arg(&trace_path));
    assert!(out.status.success());
    let text = fs::read_to_string(&trace_path).unwrap();
    let mut max_candidates = 0u64;
    let mut steps = 0u64;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        if let Some(c) = v.get("candidates").and_then(|c| c.as_u64()) {
            max_candidates = max_candidates.max(c);
            steps += 1;
        }
    }
    assert_eq!(steps, 1_000_000);
    assert!(
        max_candidates <= 8,
        "candidate count grew to {max_candidates}"
    );
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["stopped"], serde_json::json!(false));
    assert_eq!(last["n"], serde_json::json!(1_000_000));
}
