//! Experiment configuration: topology, defense, workload, seeds — plus the
//! run manifest that makes every run exactly reproducible.

use crate::error::{Error, Result};
use crate::padding::DefenseSpec;
use crate::workload::WorkloadConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Rates for one relay, bytes per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaySpec {
    pub up_bps: u64,
    pub down_bps: u64,
}

/// Default rates applied to generated client/server hosts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeHostSpec {
    pub up_bps: u64,
    pub down_bps: u64,
}

/// Propagation delays by link class, microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySpec {
    pub client_guard_us: u64,
    pub relay_relay_us: u64,
    pub exit_server_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub guards: Vec<RelaySpec>,
    pub middles: Vec<RelaySpec>,
    pub exits: Vec<RelaySpec>,
    pub client: EdgeHostSpec,
    pub server: EdgeHostSpec,
    pub latency: LatencySpec,
    /// Optional egress queue cap (cells) on relays; unset means unbounded,
    /// the default since failures here are injected, not dropped.
    #[serde(default)]
    pub relay_queue_cap: Option<usize>,
}

fn default_payload() -> u64 {
    498
}

fn default_warmup() -> u64 {
    30_000_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureConfig {
    /// Circuit-kill probability drawn once per padding cell attributed to an
    /// in-flight download. The kill manifests when that download reaches its
    /// terminal boundary.
    #[serde(default)]
    pub p_fail_per_padding_cell: f64,
}

impl Default for FailureConfig {
    fn default() -> Self {
        FailureConfig {
            p_fail_per_padding_cell: 0.0,
        }
    }
}

/// Full experiment description. One simulation runs per seed; runs share
/// nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seeds: Vec<u64>,
    pub duration_us: u64,
    /// Interval excluded from all metrics: downloads started before it are
    /// dropped at report time.
    #[serde(default = "default_warmup")]
    pub warmup_us: u64,
    pub topology: TopologySpec,
    pub defense: DefenseSpec,
    pub workload: WorkloadConfig,
    #[serde(default)]
    pub failure: FailureConfig,
    /// Application bytes per 512-byte content cell.
    #[serde(default = "default_payload")]
    pub cell_payload_bytes: u64,
    /// Emit events.log with per-cell enqueue/egress/deliver and BuFlo slot
    /// records (large; used by the audits).
    #[serde(default)]
    pub emit_events_log: bool,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        let scenario: Scenario = serde_json::from_str(&text)
            .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::config(
                "name",
                "must be non-empty and use only [A-Za-z0-9_-]",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.duration_us <= self.warmup_us {
            return Err(Error::config(
                "duration_us",
                format!(
                    "duration {} must exceed warmup {}",
                    self.duration_us, self.warmup_us
                ),
            ));
        }
        for (role, list) in [
            ("guards", &self.topology.guards),
            ("middles", &self.topology.middles),
            ("exits", &self.topology.exits),
        ] {
            if list.is_empty() {
                return Err(Error::config(
                    format!("topology.{role}"),
                    "need at least one relay",
                ));
            }
            for (i, relay) in list.iter().enumerate() {
                if relay.up_bps == 0 || relay.down_bps == 0 {
                    return Err(Error::config(
                        format!("topology.{role}[{i}]"),
                        "rates must be positive",
                    ));
                }
            }
        }
        for (field, rate) in [
            ("topology.client.up_bps", self.topology.client.up_bps),
            ("topology.client.down_bps", self.topology.client.down_bps),
            ("topology.server.up_bps", self.topology.server.up_bps),
            ("topology.server.down_bps", self.topology.server.down_bps),
        ] {
            if rate == 0 {
                return Err(Error::config(field, "rates must be positive"));
            }
        }
        // One cell per microsecond is the clock resolution; faster pipes
        // would serialize in zero time and break strict progress ordering.
        let max_rate = crate::CELL_SIZE * 1_000_000;
        let fastest = self
            .topology
            .guards
            .iter()
            .chain(&self.topology.middles)
            .chain(&self.topology.exits)
            .flat_map(|r| [r.up_bps, r.down_bps])
            .chain([
                self.topology.client.up_bps,
                self.topology.client.down_bps,
                self.topology.server.up_bps,
                self.topology.server.down_bps,
            ])
            .max()
            .unwrap_or(0);
        if fastest > max_rate {
            return Err(Error::config(
                "topology",
                format!("host rates above {max_rate} B/s serialize a cell in under 1 us"),
            ));
        }
        let lat = &self.topology.latency;
        if lat.client_guard_us == 0 || lat.relay_relay_us == 0 || lat.exit_server_us == 0 {
            return Err(Error::config("topology.latency", "latencies must be positive"));
        }
        if self.cell_payload_bytes == 0 || self.cell_payload_bytes > crate::CELL_SIZE {
            return Err(Error::config(
                "cell_payload_bytes",
                format!("must be in 1..=512, got {}", self.cell_payload_bytes),
            ));
        }
        let p = self.failure.p_fail_per_padding_cell;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(
                "failure.p_fail_per_padding_cell",
                format!("must be in [0, 1], got {p}"),
            ));
        }
        self.workload.validate("workload")?;
        self.defense.compile("defense")?;
        Ok(())
    }

    /// Hash of everything that defines the experiment environment except the
    /// defense, seeds, and output knobs. Runs are comparable (control vs
    /// defense) exactly when these match.
    pub fn scenario_hash(&self) -> String {
        let mut probe = self.clone();
        probe.seeds = Vec::new();
        probe.defense = DefenseSpec::None;
        probe.description = String::new();
        probe.emit_events_log = false;
        canonical_hash(&probe)
    }

    /// Hash of the defense block alone (name + params).
    pub fn defense_hash(&self) -> String {
        canonical_hash(&self.defense)
    }

    pub fn defense_name(&self) -> String {
        self.defense.display_name().to_string()
    }
}

/// Canonical digest: serialize to a JSON value (object keys sort in
/// serde_json's default BTreeMap representation, so input field order cannot
/// matter) and hash that text.
fn canonical_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_value(value).expect("serializable");
    let text = serde_json::to_string(&json).expect("serializable");
    let digest = Sha256::digest(text.as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Everything needed to reproduce one run bit-for-bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub scenario_name: String,
    pub scenario_hash: String,
    pub defense_name: String,
    pub defense_hash: String,
    pub seed: u64,
    pub warmup_us: u64,
    pub duration_us: u64,
    pub output_files: Vec<String>,
    /// The fully resolved scenario this run executed.
    pub scenario: Scenario,
}

impl RunManifest {
    pub fn new(scenario: &Scenario, seed: u64, output_files: Vec<String>) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario_name: scenario.name.clone(),
            scenario_hash: scenario.scenario_hash(),
            defense_name: scenario.defense_name(),
            defense_hash: scenario.defense_hash(),
            seed,
            warmup_us: scenario.warmup_us,
            duration_us: scenario.duration_us,
            output_files,
            scenario: scenario.clone(),
        }
    }

    pub fn from_path(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padding::DefenseSpec;
    use crate::workload::{BackgroundConfig, WorkloadConfig};

    pub fn tiny_scenario() -> Scenario {
        Scenario {
            name: "tiny".into(),
            description: String::new(),
            seeds: vec![1],
            duration_us: 60_000_000,
            warmup_us: 0,
            topology: TopologySpec {
                guards: vec![RelaySpec { up_bps: 1_000_000, down_bps: 1_000_000 }],
                middles: vec![RelaySpec { up_bps: 1_000_000, down_bps: 1_000_000 }],
                exits: vec![RelaySpec { up_bps: 1_000_000, down_bps: 1_000_000 }],
                client: EdgeHostSpec { up_bps: 1_000_000, down_bps: 1_000_000 },
                server: EdgeHostSpec { up_bps: 1_000_000, down_bps: 1_000_000 },
                latency: LatencySpec {
                    client_guard_us: 10_000,
                    relay_relay_us: 5_000,
                    exit_server_us: 10_000,
                },
                relay_queue_cap: None,
            },
            defense: DefenseSpec::None,
            workload: WorkloadConfig {
                benchmark_clients: 1,
                background_clients: 0,
                size_classes_bytes: vec![51_200],
                think_time: crate::engine::DistSpec::Exponential { mean: 1_000_000.0 },
                download_timeout_us: None,
                downloads_per_client: Some(2),
                background: BackgroundConfig::default(),
            },
            failure: FailureConfig::default(),
            cell_payload_bytes: 498,
            emit_events_log: false,
        }
    }

    #[test]
    fn hash_ignores_field_order_and_seeds() {
        let a = tiny_scenario();
        let mut b = tiny_scenario();
        b.seeds = vec![5, 6, 7];
        b.description = "different".into();
        assert_eq!(a.scenario_hash(), b.scenario_hash());

        // Reordered JSON text hashes identically.
        let value = serde_json::to_value(&a).unwrap();
        let reparsed: Scenario = serde_json::from_value(value).unwrap();
        assert_eq!(a.scenario_hash(), reparsed.scenario_hash());
    }

    #[test]
    fn hash_excludes_defense_but_defense_hash_sees_it() {
        let a = tiny_scenario();
        let mut b = tiny_scenario();
        b.defense = DefenseSpec::BurstExtend {
            p_extend: 0.5,
            max_extra: 4,
            gap_us: 2_000,
            spacing_us: 200,
            endpoints: vec![crate::padding::EndpointSide::Middle],
        };
        assert_eq!(a.scenario_hash(), b.scenario_hash());
        assert_ne!(a.defense_hash(), b.defense_hash());
    }

    #[test]
    fn hash_sees_topology_changes() {
        let a = tiny_scenario();
        let mut b = tiny_scenario();
        b.topology.middles[0].up_bps = 999;
        assert_ne!(a.scenario_hash(), b.scenario_hash());
    }

    #[test]
    fn validation_names_the_field() {
        let mut s = tiny_scenario();
        s.workload.size_classes_bytes = vec![0];
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("size_classes_bytes"));

        let mut s = tiny_scenario();
        s.duration_us = 1;
        s.warmup_us = 2;
        assert!(s.validate().unwrap_err().to_string().contains("duration"));
    }
}
