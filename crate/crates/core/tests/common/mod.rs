//! Shared scenario builders for integration tests.

#![allow(dead_code)] // each test binary uses its own subset

use padnet::engine::DistSpec;
use padnet::padding::DefenseSpec;
use padnet::scenario::{
    EdgeHostSpec, FailureConfig, LatencySpec, RelaySpec, Scenario, TopologySpec,
};
use padnet::workload::{BackgroundConfig, WorkloadConfig};

pub const FAST_BPS: u64 = 512_000_000; // 1 us per cell
pub const BOTTLENECK_100_CPS: u64 = 51_200; // 10 ms per cell

pub fn relay(up: u64) -> RelaySpec {
    RelaySpec {
        up_bps: up,
        down_bps: FAST_BPS,
    }
}

/// Single-circuit micro topology: one relay per role, middle egress is the
/// bottleneck, 5 ms per link.
pub fn micro_scenario(middle_up: u64) -> Scenario {
    Scenario {
        name: "micro".into(),
        description: String::new(),
        seeds: vec![1],
        duration_us: 600_000_000,
        warmup_us: 0,
        topology: TopologySpec {
            guards: vec![relay(FAST_BPS)],
            middles: vec![relay(middle_up)],
            exits: vec![relay(FAST_BPS)],
            client: EdgeHostSpec {
                up_bps: FAST_BPS,
                down_bps: FAST_BPS,
            },
            server: EdgeHostSpec {
                up_bps: FAST_BPS,
                down_bps: FAST_BPS,
            },
            latency: LatencySpec {
                client_guard_us: 5_000,
                relay_relay_us: 5_000,
                exit_server_us: 5_000,
            },
            relay_queue_cap: None,
        },
        defense: DefenseSpec::None,
        workload: WorkloadConfig {
            benchmark_clients: 1,
            background_clients: 0,
            size_classes_bytes: vec![100 * 498],
            think_time: DistSpec::Uniform {
                low: 100_000.0,
                high: 100_000.0,
            },
            download_timeout_us: None,
            downloads_per_client: Some(1),
            background: BackgroundConfig::default(),
        },
        failure: FailureConfig {
            p_fail_per_padding_cell: 0.0,
        },
        cell_payload_bytes: 498,
        emit_events_log: true,
    }
}

/// Machine that injects exactly one padding cell right behind every content
/// cell the middle forwards client-bound.
pub fn echo_defense() -> DefenseSpec {
    serde_json::from_value(serde_json::json!({
        "name": "custom",
        "machines": [{
            "name": "echo",
            "endpoint": "middle",
            "start_state": "idle",
            "states": {
                "idle": {
                    "transitions": { "NonPaddingSent": "echo" }
                },
                "echo": {
                    "iat": { "dist": "uniform", "low": 0.0, "high": 0.0 },
                    "transitions": { "PaddingSent": "idle", "NonPaddingSent": "echo" }
                }
            }
        }]
    }))
    .unwrap()
}
