//! Traffic generation: benchmarking clients doing fixed-size downloads and
//! on/off background clients that load the shared relays.

use crate::engine::DistSpec;
use crate::error::{Error, Result};
use crate::net::CircuitId;
use crate::time::SimTime;
use serde::{Deserialize, Serialize};

/// Standard benchmark transfer sizes.
pub const SIZE_50K: u64 = 50 * 1024;
pub const SIZE_1M: u64 = 1024 * 1024;
pub const SIZE_5M: u64 = 5 * 1024 * 1024;

/// Short label used in file names and CSV columns for a size class.
pub fn size_label(bytes: u64) -> String {
    match bytes {
        SIZE_50K => "50K".to_string(),
        SIZE_1M => "1M".to_string(),
        SIZE_5M => "5M".to_string(),
        other => format!("{other}B"),
    }
}

/// Content cells needed to carry `size` bytes at `payload` bytes per cell.
pub fn cells_for(size: u64, payload: u64) -> u64 {
    size.div_ceil(payload)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownloadStatus {
    Success,
    Timeout,
    CircuitFailed,
}

impl DownloadStatus {
    pub fn label(self) -> &'static str {
        match self {
            DownloadStatus::Success => "success",
            DownloadStatus::Timeout => "timeout",
            DownloadStatus::CircuitFailed => "circuit_failed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "success" => Ok(DownloadStatus::Success),
            "timeout" => Ok(DownloadStatus::Timeout),
            "circuit_failed" => Ok(DownloadStatus::CircuitFailed),
            other => Err(Error::parse(format!("unknown download status `{other}`"))),
        }
    }
}

/// One progress sample: cumulative content bytes and padding counters at the
/// moment a content cell was delivered to the client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProgressSample {
    pub at: SimTime,
    pub content_bytes: u64,
    pub padding_rx_cells: u64,
    pub padding_tx_cells: u64,
}

/// One benchmark transfer.
#[derive(Debug, Clone)]
pub struct DownloadRecord {
    pub id: u32,
    pub client_index: u32,
    pub circuit: CircuitId,
    pub size_bytes: u64,
    pub started_at: SimTime,
    pub ended_at: Option<SimTime>,
    pub status: Option<DownloadStatus>,
    pub progress: Vec<ProgressSample>,
    pub padding_rx_cells: u64,
    pub padding_tx_cells: u64,
}

impl DownloadRecord {
    pub fn content_bytes(&self) -> u64 {
        self.progress.last().map_or(0, |p| p.content_bytes)
    }

    pub fn in_flight(&self) -> bool {
        self.status.is_none()
    }
}

fn default_think_time() -> DistSpec {
    DistSpec::Exponential { mean: 5_000_000.0 }
}

fn default_timeout() -> Option<u64> {
    Some(60_000_000)
}

fn default_size_classes() -> Vec<u64> {
    vec![SIZE_50K, SIZE_1M, SIZE_5M]
}

fn default_bg_period() -> DistSpec {
    DistSpec::Exponential { mean: 3_000_000.0 }
}

fn default_bg_rate() -> u64 {
    400
}

/// Background client behavior: alternating on/off periods; during an on
/// period the session's server streams client-bound cells at `rate_cells_per_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundConfig {
    #[serde(default = "default_bg_period")]
    pub on: DistSpec,
    #[serde(default = "default_bg_period")]
    pub off: DistSpec,
    #[serde(default = "default_bg_rate")]
    pub rate_cells_per_s: u64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            on: default_bg_period(),
            off: default_bg_period(),
            rate_cells_per_s: default_bg_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub benchmark_clients: u32,
    #[serde(default)]
    pub background_clients: u32,
    /// Size classes cycled round-robin by every benchmark client.
    #[serde(default = "default_size_classes")]
    pub size_classes_bytes: Vec<u64>,
    /// Pause between a terminal download and the next attempt, microseconds.
    #[serde(default = "default_think_time")]
    pub think_time: DistSpec,
    /// `null` means no timeout (downloads only end by completing, failing, or
    /// the run ending).
    #[serde(default = "default_timeout")]
    pub download_timeout_us: Option<u64>,
    /// Stop each benchmark client after this many attempts; `null` keeps
    /// going for the whole run.
    #[serde(default)]
    pub downloads_per_client: Option<u32>,
    #[serde(default)]
    pub background: BackgroundConfig,
}

impl WorkloadConfig {
    pub fn validate(&self, field: &str) -> Result<()> {
        if self.benchmark_clients == 0 {
            return Err(Error::config(
                format!("{field}.benchmark_clients"),
                "need at least one benchmark client",
            ));
        }
        if self.size_classes_bytes.is_empty() {
            return Err(Error::config(
                format!("{field}.size_classes_bytes"),
                "need at least one size class",
            ));
        }
        for (i, &size) in self.size_classes_bytes.iter().enumerate() {
            if size == 0 {
                return Err(Error::config(
                    format!("{field}.size_classes_bytes[{i}]"),
                    "zero-byte size class",
                ));
            }
        }
        if self.download_timeout_us == Some(0) {
            return Err(Error::config(
                format!("{field}.download_timeout_us"),
                "timeout must be positive (use null for no timeout)",
            ));
        }
        self.think_time.validate(&format!("{field}.think_time"))?;
        self.background.on.validate(&format!("{field}.background.on"))?;
        self.background.off.validate(&format!("{field}.background.off"))?;
        if self.background_clients > 0 && self.background.rate_cells_per_s == 0 {
            return Err(Error::config(
                format!("{field}.background.rate_cells_per_s"),
                "background rate must be positive",
            ));
        }
        Ok(())
    }
}
