//! Command-line surface: validation diagnostics, override precedence,
//! manifest round trips, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn padnet_raw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_padnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn padnet_ok(args: &[&str]) -> String {
    let output = padnet_raw(args);
    assert!(
        output.status.success(),
        "padnet {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).unwrap()
}

fn tiny_scenario() -> serde_json::Value {
    serde_json::json!({
        "name": "tiny-cli",
        "seeds": [4, 5],
        "duration_us": 30_000_000u64,
        "warmup_us": 0,
        "topology": {
            "guards": [{ "up_bps": 512_000_000u64, "down_bps": 512_000_000u64 }],
            "middles": [{ "up_bps": 512_000_000u64, "down_bps": 512_000_000u64 }],
            "exits": [{ "up_bps": 512_000_000u64, "down_bps": 512_000_000u64 }],
            "client": { "up_bps": 512_000_000u64, "down_bps": 512_000_000u64 },
            "server": { "up_bps": 512_000_000u64, "down_bps": 512_000_000u64 },
            "latency": { "client_guard_us": 5000, "relay_relay_us": 5000, "exit_server_us": 5000 }
        },
        "defense": {
            "name": "adaptive_gap",
            "bins": [[500, 5]],
            "infinity_tokens": 3
        },
        "workload": {
            "benchmark_clients": 1,
            "background_clients": 0,
            "size_classes_bytes": [51200],
            "think_time": { "dist": "exponential", "mean": 500_000.0 },
            "download_timeout_us": null,
            "downloads_per_client": 3
        },
        "failure": { "p_fail_per_padding_cell": 0.0 },
        "emit_events_log": false
    })
}

fn write_scenario(dir: &Path, value: &serde_json::Value) -> PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, value.to_string()).unwrap();
    path
}

#[test]
fn validate_reports_ok_and_names_bad_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), &tiny_scenario());
    let stdout = padnet_ok(&["validate", "--scenario", path.to_str().unwrap()]);
    assert!(stdout.contains("tiny-cli: ok"));
    assert!(stdout.contains("adaptive_gap"));

    let mut bad = tiny_scenario();
    bad["workload"]["size_classes_bytes"] = serde_json::json!([0]);
    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, bad.to_string()).unwrap();
    let output = padnet_raw(&["validate", "--scenario", bad_path.to_str().unwrap()]);
    assert!(!output.status.success(), "invalid config must exit nonzero");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("size_classes_bytes"),
        "diagnostic must name the field: {stderr}"
    );
}

#[test]
fn run_writes_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), &tiny_scenario());
    let out = dir.path().join("runs");
    padnet_ok(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let mut dirs: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    dirs.sort();
    assert_eq!(dirs.len(), 2, "one directory per seed");
    assert!(dirs[0].ends_with("-s4") && dirs[1].ends_with("-s5"), "{dirs:?}");
    for d in &dirs {
        for file in ["downloads.csv", "progress.csv", "run_meta.json"] {
            assert!(out.join(d).join(file).exists(), "{d}/{file} missing");
        }
    }
}

/// The --defense flag beats the scenario file, and the manifest records the
/// override (re-running from it reproduces the override exactly).
#[test]
fn defense_override_wins_and_lands_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), &tiny_scenario());
    let out = dir.path().join("runs");
    padnet_ok(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--seed",
        "1",
        "--defense",
        "none",
        "--out",
        out.to_str().unwrap(),
    ]);
    let run_dir = std::fs::read_dir(&out).unwrap().next().unwrap().unwrap().path();
    assert!(run_dir.file_name().unwrap().to_str().unwrap().contains("-none-"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("run_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["defense_name"], "none");
    assert_eq!(meta["scenario"]["defense"]["name"], "none");

    // Manifest round trip: byte-identical raw files in a fresh directory.
    let out2 = dir.path().join("rerun");
    padnet_ok(&[
        "run",
        "--from-manifest",
        run_dir.join("run_meta.json").to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    let rerun_dir = std::fs::read_dir(&out2).unwrap().next().unwrap().unwrap().path();
    for file in ["downloads.csv", "progress.csv"] {
        assert_eq!(
            std::fs::read(run_dir.join(file)).unwrap(),
            std::fs::read(rerun_dir.join(file)).unwrap(),
            "{file} not reproduced from manifest"
        );
    }
}

#[test]
fn report_refuses_defense_mismatch_in_compare() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), &tiny_scenario());
    let out = dir.path().join("runs");
    padnet_ok(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--seed",
        "1",
        "--defense",
        "none",
        "--out",
        out.to_str().unwrap(),
    ]);
    let run_dir = std::fs::read_dir(&out).unwrap().next().unwrap().unwrap().path();
    let report = dir.path().join("report");
    padnet_ok(&["report", "--out", report.to_str().unwrap(), run_dir.to_str().unwrap()]);

    // A trace report for a defense absent from the network report.
    let trace_report = dir.path().join("trace_report.csv");
    std::fs::write(&trace_report, "defense,bandwidth_pct,latency_pct\nburst_extend,10.0,0.0\n")
        .unwrap();
    let output = padnet_raw(&[
        "compare",
        "--report-dir",
        report.to_str().unwrap(),
        "--trace-report",
        trace_report.to_str().unwrap(),
        "--size",
        "50K",
        "--out",
        dir.path().join("cmp.csv").to_str().unwrap(),
    ]);
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("burst_extend"));
}

#[test]
fn trace_apply_rejects_none() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    std::fs::write(&trace, "timestamp_us,direction,kind\n0,client_bound,content\n").unwrap();
    let output = padnet_raw(&[
        "trace",
        "apply",
        "--trace",
        trace.to_str().unwrap(),
        "--defense",
        "none",
        "--out",
        dir.path().join("o.csv").to_str().unwrap(),
    ]);
    assert!(!output.status.success());
}

/// Compare with a delaying defense: BuFlo shows positive latency overhead in
/// BOTH columns, unlike padding-only defenses.
#[test]
fn compare_shows_buflo_delaying_in_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = tiny_scenario();
    // Slow the bottleneck enough that slotting visibly dominates.
    scenario["name"] = serde_json::json!("tiny-buflo");
    scenario["workload"]["downloads_per_client"] = serde_json::json!(4);
    let path = write_scenario(dir.path(), &scenario);

    let out_ctl = dir.path().join("ctl");
    let out_buflo = dir.path().join("buflo");
    padnet_ok(&[
        "run", "--scenario", path.to_str().unwrap(),
        "--seed", "1", "--defense", "none",
        "--out", out_ctl.to_str().unwrap(),
    ]);
    padnet_ok(&[
        "run", "--scenario", path.to_str().unwrap(),
        "--seed", "1", "--defense", "buflo",
        "--defense-params", r#"{"slot_us":10000,"min_duration_us":1000000}"#,
        "--out", out_buflo.to_str().unwrap(),
    ]);
    let ctl_dir = std::fs::read_dir(&out_ctl).unwrap().next().unwrap().unwrap().path();
    let buflo_dir = std::fs::read_dir(&out_buflo).unwrap().next().unwrap().unwrap().path();

    let report = dir.path().join("report");
    padnet_ok(&[
        "report", "--out", report.to_str().unwrap(),
        ctl_dir.to_str().unwrap(), buflo_dir.to_str().unwrap(),
    ]);

    // Defend a recorded control trace with the same BuFlo configuration.
    let trace = dir.path().join("trace.csv");
    padnet_ok(&[
        "trace", "gen", "--run", ctl_dir.to_str().unwrap(),
        "--out", trace.to_str().unwrap(),
    ]);
    let trace_report = dir.path().join("trace_report.csv");
    padnet_ok(&[
        "trace", "apply", "--trace", trace.to_str().unwrap(),
        "--defense", "buflo",
        "--defense-params", r#"{"slot_us":10000,"min_duration_us":1000000}"#,
        "--seed", "1",
        "--out", dir.path().join("defended.csv").to_str().unwrap(),
        "--report", trace_report.to_str().unwrap(),
    ]);

    let compare = dir.path().join("compare.csv");
    padnet_ok(&[
        "compare", "--report-dir", report.to_str().unwrap(),
        "--trace-report", trace_report.to_str().unwrap(),
        "--size", "50K",
        "--out", compare.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&compare).unwrap();
    let row = text.lines().find(|l| l.starts_with("buflo,")).expect("buflo row");
    let cells: Vec<&str> = row.split(',').collect();
    let trace_latency: f64 = cells[1].parse().unwrap();
    let network_latency: f64 = cells[2].parse().unwrap();
    assert!(trace_latency > 0.0, "BuFlo delays in trace mode: {row}");
    assert!(network_latency > 0.0, "BuFlo delays in network mode: {row}");

    let none_row = text.lines().find(|l| l.starts_with("none,")).unwrap();
    assert_eq!(none_row, "none,0.0,0.0");
}

/// PADNET_OUT provides the default output root; --workers parallelizes
/// seeds without changing any output byte.
#[test]
fn env_output_root_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), &tiny_scenario());
    let env_root = dir.path().join("from-env");
    let output = Command::new(env!("CARGO_BIN_EXE_padnet"))
        .args(["run", "--scenario", path.to_str().unwrap(), "--workers", "2"])
        .env("PADNET_OUT", &env_root)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let mut names: Vec<String> = std::fs::read_dir(&env_root)
        .expect("output landed under PADNET_OUT")
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 2);

    // Sequential run of the same seeds into an explicit --out matches.
    let seq_root = dir.path().join("seq");
    padnet_ok(&[
        "run", "--scenario", path.to_str().unwrap(),
        "--workers", "1", "--out", seq_root.to_str().unwrap(),
    ]);
    for name in &names {
        assert_eq!(
            std::fs::read(env_root.join(name).join("downloads.csv")).unwrap(),
            std::fs::read(seq_root.join(name).join("downloads.csv")).unwrap(),
            "worker parallelism changed {name}"
        );
    }
}
