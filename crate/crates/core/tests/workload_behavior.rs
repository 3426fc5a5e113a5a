//! Benchmark client behavior: size rotation, timeouts, failure injection,
//! and terminal-status accounting.

mod common;

use common::{micro_scenario, BOTTLENECK_100_CPS, FAST_BPS};
use padnet::padding::{DefenseSpec, EndpointSide};
use padnet::sim::run_one;
use padnet::workload::{DownloadStatus, SIZE_1M, SIZE_50K, SIZE_5M};

#[test]
fn size_classes_rotate_round_robin() {
    let mut scenario = micro_scenario(FAST_BPS);
    scenario.workload.size_classes_bytes = vec![SIZE_50K, SIZE_1M, SIZE_5M];
    scenario.workload.downloads_per_client = Some(6);
    scenario.emit_events_log = false;
    scenario.validate().unwrap();
    let run = run_one(&scenario, 2);
    let sizes: Vec<u64> = run.downloads.iter().map(|d| d.size_bytes).collect();
    assert_eq!(sizes, vec![SIZE_50K, SIZE_1M, SIZE_5M, SIZE_50K, SIZE_1M, SIZE_5M]);
    assert!(run
        .downloads
        .iter()
        .all(|d| d.status == Some(DownloadStatus::Success)));
}

#[test]
fn fifty_kib_download_is_103_cells() {
    let mut scenario = micro_scenario(FAST_BPS);
    scenario.workload.size_classes_bytes = vec![SIZE_50K];
    scenario.validate().unwrap();
    let run = run_one(&scenario, 2);
    let d = &run.downloads[0];
    assert_eq!(d.progress.len(), 103);
    assert_eq!(d.content_bytes(), SIZE_50K);
    // Last cell carries the remainder: 51200 - 102*498 = 404 bytes.
    let tail = d.progress[102].content_bytes - d.progress[101].content_bytes;
    assert_eq!(tail, 404);
}

#[test]
fn timeout_keeps_partial_progress() {
    let mut scenario = micro_scenario(BOTTLENECK_100_CPS);
    // 100 cells/s bottleneck cannot finish 103 cells in 500 ms.
    scenario.workload.size_classes_bytes = vec![SIZE_50K];
    scenario.workload.download_timeout_us = Some(500_000);
    scenario.workload.downloads_per_client = Some(2);
    scenario.validate().unwrap();
    let run = run_one(&scenario, 2);
    let d = &run.downloads[0];
    assert_eq!(d.status, Some(DownloadStatus::Timeout));
    assert_eq!(d.ended_at, None, "end is only recorded for successes");
    assert!(!d.progress.is_empty(), "partials are retained for filtering");
    assert!(d.content_bytes() < SIZE_50K);
    // The client attempts the next download afterwards.
    assert!(run.downloads.len() > 1);
}

fn failure_scenario(p_fail: f64, aggressive: bool, per_client: u32) -> padnet::scenario::Scenario {
    let mut scenario = micro_scenario(FAST_BPS);
    scenario.workload.size_classes_bytes = vec![SIZE_50K];
    scenario.workload.benchmark_clients = 4;
    scenario.workload.downloads_per_client = Some(per_client);
    scenario.workload.think_time = padnet::engine::DistSpec::Uniform {
        low: 20_000.0,
        high: 20_000.0,
    };
    scenario.failure.p_fail_per_padding_cell = p_fail;
    let bins = if aggressive {
        vec![padnet::engine::HistBin { upper_us: 200, tokens: 20 }]
    } else {
        vec![padnet::engine::HistBin { upper_us: 5_000, tokens: 1 }]
    };
    scenario.defense = DefenseSpec::AdaptiveGap {
        bins,
        infinity_tokens: 1,
        token_removal: true,
        budget_cells: None,
        endpoints: vec![EndpointSide::Client, EndpointSide::Middle],
    };
    scenario.emit_events_log = false;
    scenario.duration_us = 300_000_000;
    scenario.validate().unwrap();
    scenario
}

#[test]
fn fail_knob_off_means_no_circuit_failures() {
    let run = run_one(&failure_scenario(0.0, true, 10), 5);
    assert!(run
        .downloads
        .iter()
        .all(|d| d.status != Some(DownloadStatus::CircuitFailed)));
}

#[test]
fn fail_knob_saturated_kills_every_padded_download() {
    let run = run_one(&failure_scenario(1.0, true, 5), 5);
    for d in &run.downloads {
        if d.padding_rx_cells + d.padding_tx_cells > 0 {
            assert_eq!(d.status, Some(DownloadStatus::CircuitFailed));
        } else {
            assert_eq!(d.status, Some(DownloadStatus::Success));
        }
    }
    let failed = run
        .downloads
        .iter()
        .filter(|d| d.status == Some(DownloadStatus::CircuitFailed))
        .count();
    assert!(failed > 0, "aggressive padding must have touched downloads");
}

/// Heavier padding means more kill draws per download, so more failures at
/// the same per-cell probability (binomial expectation, fixed seeds).
#[test]
fn failures_scale_with_padding_exposure() {
    let heavy = run_one(&failure_scenario(0.002, true, 50), 6);
    let light = run_one(&failure_scenario(0.002, false, 50), 6);
    assert!(heavy.downloads.len() >= 200);
    assert!(light.downloads.len() >= 200);
    let count_failed = |run: &padnet::sim::RunOutput| {
        run.downloads
            .iter()
            .filter(|d| d.status == Some(DownloadStatus::CircuitFailed))
            .count()
    };
    let pad_mean = |run: &padnet::sim::RunOutput| {
        run.downloads
            .iter()
            .map(|d| d.padding_rx_cells + d.padding_tx_cells)
            .sum::<u64>() as f64
            / run.downloads.len() as f64
    };
    assert!(
        pad_mean(&heavy) > 4.0 * pad_mean(&light),
        "configs must separate exposure: heavy {} vs light {}",
        pad_mean(&heavy),
        pad_mean(&light)
    );
    assert!(
        count_failed(&heavy) > count_failed(&light),
        "heavy {} vs light {}",
        count_failed(&heavy),
        count_failed(&light)
    );
}

#[test]
fn every_download_has_exactly_one_terminal_status() {
    // Cut the run mid-flight: in-flight downloads resolve as timeouts.
    let mut scenario = micro_scenario(BOTTLENECK_100_CPS);
    scenario.workload.size_classes_bytes = vec![SIZE_1M];
    scenario.workload.downloads_per_client = None;
    scenario.duration_us = 3_000_000;
    scenario.emit_events_log = false;
    scenario.validate().unwrap();
    let run = run_one(&scenario, 2);
    assert!(!run.downloads.is_empty());
    let (mut ok, mut timeout, mut failed) = (0, 0, 0);
    for d in &run.downloads {
        match d.status.expect("terminal status") {
            DownloadStatus::Success => ok += 1,
            DownloadStatus::Timeout => timeout += 1,
            DownloadStatus::CircuitFailed => failed += 1,
        }
    }
    assert_eq!(ok + timeout + failed, run.downloads.len());
    assert!(timeout >= 1, "the cut download resolves as a timeout");
}

/// Closed world: knob off, no timeout, run to quiescence => 100% success.
#[test]
fn closed_run_succeeds_completely() {
    let mut scenario = micro_scenario(FAST_BPS);
    scenario.workload.size_classes_bytes = vec![SIZE_50K, SIZE_1M, SIZE_5M];
    scenario.workload.benchmark_clients = 2;
    scenario.workload.downloads_per_client = Some(6);
    scenario.emit_events_log = false;
    scenario.validate().unwrap();
    let run = run_one(&scenario, 13);
    assert_eq!(run.downloads.len(), 12);
    assert!(run
        .downloads
        .iter()
        .all(|d| d.status == Some(DownloadStatus::Success)));
}
