//! Report construction from raw run files: grouping rules, the
//! successful-only filter, pooling, and schema stability.

mod common;

use common::{micro_scenario, FAST_BPS};
use padnet::padding::{DefenseSpec, EndpointSide};
use padnet::report::{group_runs, write_reports, DEFAULT_PAD_BIN_WIDTH};
use padnet::runfiles::{read_run_dir, run_and_write};
use padnet::workload::{DownloadStatus, SIZE_50K};

fn failing_scenario() -> padnet::scenario::Scenario {
    let mut scenario = micro_scenario(FAST_BPS);
    scenario.workload.size_classes_bytes = vec![SIZE_50K];
    scenario.workload.benchmark_clients = 2;
    scenario.workload.downloads_per_client = Some(10);
    scenario.failure.p_fail_per_padding_cell = 0.01;
    scenario.defense = DefenseSpec::AdaptiveGap {
        bins: vec![padnet::engine::HistBin { upper_us: 300, tokens: 8 }],
        infinity_tokens: 1,
        token_removal: true,
        budget_cells: None,
        endpoints: vec![EndpointSide::Client, EndpointSide::Middle],
    };
    scenario.emit_events_log = false;
    scenario.validate().unwrap();
    scenario
}

#[test]
fn reports_are_written_with_documented_columns() {
    let scenario = failing_scenario();
    let run_dir = tempfile::tempdir().unwrap();
    run_and_write(&scenario, 3, run_dir.path()).unwrap();
    let data = read_run_dir(run_dir.path()).unwrap();
    assert!(data.records.iter().any(|r| r.status != DownloadStatus::Success));

    let groups = group_runs(vec![data]).unwrap();
    let out = tempfile::tempdir().unwrap();
    let files = write_reports(&groups, out.path(), DEFAULT_PAD_BIN_WIDTH).unwrap();
    assert_eq!(
        files,
        vec![
            "ttb_50K.csv",
            "pctb_50K.csv",
            "err_50K.csv",
            "scatter_50K.csv",
            "scatter_r2_50K.csv",
            "pad_err_50K.csv",
        ]
    );
    let ttb = std::fs::read_to_string(out.path().join("ttb_50K.csv")).unwrap();
    assert!(ttb.starts_with("kib_count,adaptive_gap_time_ms\n"));
    assert_eq!(ttb.lines().count(), 101, "header plus one row per mark");
    let pctb = std::fs::read_to_string(out.path().join("pctb_50K.csv")).unwrap();
    assert!(pctb.starts_with("kib_count,adaptive_gap_bwoh_pct\n"));
    let scatter = std::fs::read_to_string(out.path().join("scatter_50K.csv")).unwrap();
    assert!(scatter.starts_with("defense,padding_count,download_time_ms\n"));
    let pad_err = std::fs::read_to_string(out.path().join("pad_err_50K.csv")).unwrap();
    assert!(pad_err.starts_with("padding_bin,adaptive_gap_failure_pct\n"));
}

/// Dropping failed records changes nothing in ttb/pctb (the successful-only
/// filter is already applied) but does change the failure table.
#[test]
fn success_filter_is_idempotent_for_medians() {
    let scenario = failing_scenario();
    let run_dir = tempfile::tempdir().unwrap();
    run_and_write(&scenario, 3, run_dir.path()).unwrap();

    let all = read_run_dir(run_dir.path()).unwrap();
    let mut only_ok = read_run_dir(run_dir.path()).unwrap();
    let had_failures = only_ok
        .records
        .iter()
        .any(|r| r.status != DownloadStatus::Success);
    assert!(had_failures, "scenario must produce failures for this test");
    only_ok.records.retain(|r| r.status == DownloadStatus::Success);

    let out_all = tempfile::tempdir().unwrap();
    let out_ok = tempfile::tempdir().unwrap();
    write_reports(&group_runs(vec![all]).unwrap(), out_all.path(), 50).unwrap();
    write_reports(&group_runs(vec![only_ok]).unwrap(), out_ok.path(), 50).unwrap();

    for file in ["ttb_50K.csv", "pctb_50K.csv"] {
        assert_eq!(
            std::fs::read(out_all.path().join(file)).unwrap(),
            std::fs::read(out_ok.path().join(file)).unwrap(),
            "{file} must not depend on failed records"
        );
    }
    assert_ne!(
        std::fs::read(out_all.path().join("err_50K.csv")).unwrap(),
        std::fs::read(out_ok.path().join("err_50K.csv")).unwrap(),
        "failure table must see the failed records"
    );
}

/// Pooling two byte-identical runs leaves every median and rate unchanged.
#[test]
fn duplicate_runs_pool_to_the_same_tables() {
    let scenario = failing_scenario();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_and_write(&scenario, 3, dir_a.path()).unwrap();
    run_and_write(&scenario, 3, dir_b.path()).unwrap();

    let single = group_runs(vec![read_run_dir(dir_a.path()).unwrap()]).unwrap();
    let double = group_runs(vec![
        read_run_dir(dir_a.path()).unwrap(),
        read_run_dir(dir_b.path()).unwrap(),
    ])
    .unwrap();

    let out_one = tempfile::tempdir().unwrap();
    let out_two = tempfile::tempdir().unwrap();
    write_reports(&single, out_one.path(), 50).unwrap();
    write_reports(&double, out_two.path(), 50).unwrap();
    for file in ["ttb_50K.csv", "pctb_50K.csv", "err_50K.csv", "pad_err_50K.csv"] {
        assert_eq!(
            std::fs::read(out_one.path().join(file)).unwrap(),
            std::fs::read(out_two.path().join(file)).unwrap(),
            "{file} changed under duplication"
        );
    }
}

#[test]
fn mixed_scenarios_are_refused() {
    let a = failing_scenario();
    let mut b = failing_scenario();
    b.topology.middles[0].up_bps /= 2;
    b.validate().unwrap();

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_and_write(&a, 1, dir_a.path()).unwrap();
    run_and_write(&b, 1, dir_b.path()).unwrap();

    let err = group_runs(vec![
        read_run_dir(dir_a.path()).unwrap(),
        read_run_dir(dir_b.path()).unwrap(),
    ])
    .unwrap_err();
    assert!(err.to_string().contains("not comparable"));
}

#[test]
fn same_defense_name_with_different_params_is_refused() {
    let a = failing_scenario();
    let mut b = failing_scenario();
    b.defense = DefenseSpec::AdaptiveGap {
        bins: vec![padnet::engine::HistBin { upper_us: 999, tokens: 2 }],
        infinity_tokens: 5,
        token_removal: true,
        budget_cells: None,
        endpoints: vec![EndpointSide::Middle],
    };
    b.validate().unwrap();

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_and_write(&a, 1, dir_a.path()).unwrap();
    run_and_write(&b, 1, dir_b.path()).unwrap();
    let err = group_runs(vec![
        read_run_dir(dir_a.path()).unwrap(),
        read_run_dir(dir_b.path()).unwrap(),
    ])
    .unwrap_err();
    assert!(err.to_string().contains("configured differently"));
}

/// Warmup exclusion: downloads started before the warmup boundary vanish
/// from every table.
#[test]
fn warmup_records_are_excluded() {
    let mut scenario = failing_scenario();
    scenario.failure.p_fail_per_padding_cell = 0.0;
    scenario.warmup_us = 0;
    scenario.duration_us = 120_000_000;
    scenario.validate().unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_and_write(&scenario, 9, dir.path()).unwrap();

    let mut all = read_run_dir(dir.path()).unwrap();
    let cut = all.records[2].start_us + 1;
    all.meta.manifest.warmup_us = cut;
    let n_after = all.records.iter().filter(|r| r.start_us >= cut).count();
    assert!(n_after > 0 && n_after < all.records.len());

    let out = tempfile::tempdir().unwrap();
    write_reports(&group_runs(vec![all]).unwrap(), out.path(), 50).unwrap();
    let scatter = std::fs::read_to_string(out.path().join("scatter_50K.csv")).unwrap();
    assert_eq!(scatter.lines().count() - 1, n_after);
}

/// Time-to-byte medians are non-decreasing in download progress: successes
/// reach every mark, so each defense's column rises monotonically.
#[test]
fn ttb_columns_are_monotone_in_progress() {
    let scenario = failing_scenario();
    let run_dir = tempfile::tempdir().unwrap();
    run_and_write(&scenario, 3, run_dir.path()).unwrap();
    let groups = group_runs(vec![read_run_dir(run_dir.path()).unwrap()]).unwrap();
    let out = tempfile::tempdir().unwrap();
    write_reports(&groups, out.path(), 50).unwrap();

    let text = std::fs::read_to_string(out.path().join("ttb_50K.csv")).unwrap();
    let mut last = -1.0f64;
    for line in text.lines().skip(1) {
        let cell = line.split(',').nth(1).unwrap();
        let value: f64 = cell.parse().expect("successes reach every mark");
        assert!(value >= last, "ttb decreased: {value} after {last}");
        last = value;
    }
}
