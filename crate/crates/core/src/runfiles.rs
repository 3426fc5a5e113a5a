//! Raw per-run output files and their readers.
//!
//! A run directory contains:
//! - `run_meta.json`: the manifest (enough to reproduce the run) plus a
//!   summary block.
//! - `downloads.csv`: one row per attempted benchmark download.
//! - `progress.csv`: one row per content cell delivered to a benchmark
//!   client, with the padding counters at that instant.
//! - `events.log` (optional): per-cell transport records for the audits.
//!
//! All CSVs are UTF-8, comma separated, LF line endings, header row first.
//! Every report value is recomputable from these files alone.

use crate::error::{Error, Result};
use crate::net::CircuitId;
use crate::scenario::{RunManifest, Scenario};
use crate::sim::{run_one, HostUtil, RunOutput};
use crate::time::SimTime;
use crate::workload::{size_label, DownloadRecord, DownloadStatus, ProgressSample};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const DOWNLOADS_FILE: &str = "downloads.csv";
pub const PROGRESS_FILE: &str = "progress.csv";
pub const EVENTS_FILE: &str = "events.log";
pub const META_FILE: &str = "run_meta.json";

pub const DOWNLOADS_HEADER: &str = "download_id,client,circuit,size_bytes,size_class,start_us,end_us,status,content_bytes,padding_rx_cells,padding_tx_cells";
pub const PROGRESS_HEADER: &str = "download_id,t_us,content_bytes,padding_rx_cells,padding_tx_cells";

/// Post-run counters stored next to the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub dispatched_events: u64,
    pub padding_injected_cells: u64,
    pub downloads_attempted: u64,
    pub downloads_succeeded: u64,
    pub drops_closed_circuit: u64,
    pub drops_unknown_circuit: u64,
    pub drops_queue_full: u64,
    pub drops_late_content: u64,
    pub machine_chain_overflows: u64,
    pub host_utilization: Vec<HostUtil>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    #[serde(flatten)]
    pub manifest: RunManifest,
    pub summary: RunSummary,
}

/// Execute one `(scenario, seed)` run and write its directory. Returns the
/// metadata that was written.
pub fn run_and_write(scenario: &Scenario, seed: u64, dir: &Path) -> Result<RunMeta> {
    let output = run_one(scenario, seed);
    write_run_dir(scenario, seed, &output, dir)
}

pub fn write_run_dir(
    scenario: &Scenario,
    seed: u64,
    output: &RunOutput,
    dir: &Path,
) -> Result<RunMeta> {
    std::fs::create_dir_all(dir)?;

    let mut files = vec![DOWNLOADS_FILE.to_string(), PROGRESS_FILE.to_string()];
    write_downloads_csv(&output.downloads, &dir.join(DOWNLOADS_FILE))?;
    write_progress_csv(&output.downloads, &dir.join(PROGRESS_FILE))?;
    if let Some(log) = &output.event_log {
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(EVENTS_FILE))?);
        for line in log {
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        files.push(EVENTS_FILE.to_string());
    }

    let manifest = RunManifest::new(scenario, seed, files);
    let succeeded = output
        .downloads
        .iter()
        .filter(|d| d.status == Some(DownloadStatus::Success))
        .count() as u64;
    let meta = RunMeta {
        manifest,
        summary: RunSummary {
            dispatched_events: output.dispatched,
            padding_injected_cells: output.padding_injected_cells,
            downloads_attempted: output.downloads.len() as u64,
            downloads_succeeded: succeeded,
            drops_closed_circuit: output.drops.closed_circuit,
            drops_unknown_circuit: output.drops.unknown_circuit,
            drops_queue_full: output.drops.queue_full,
            drops_late_content: output.drops.late_content,
            machine_chain_overflows: output.chain_overflows,
            host_utilization: output.host_util.clone(),
        },
    };
    let json = serde_json::to_string_pretty(&meta)?;
    std::fs::write(dir.join(META_FILE), json + "\n")?;
    Ok(meta)
}

fn write_downloads_csv(downloads: &[DownloadRecord], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{DOWNLOADS_HEADER}")?;
    for d in downloads {
        let status = d
            .status
            .expect("runs only persist terminal downloads")
            .label();
        let end = d.ended_at.map_or(String::new(), |t| t.as_micros().to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            d.id,
            d.client_index,
            d.circuit.0,
            d.size_bytes,
            size_label(d.size_bytes),
            d.started_at.as_micros(),
            end,
            status,
            d.content_bytes(),
            d.padding_rx_cells,
            d.padding_tx_cells
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_progress_csv(downloads: &[DownloadRecord], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{PROGRESS_HEADER}")?;
    for d in downloads {
        for p in &d.progress {
            writeln!(
                w,
                "{},{},{},{},{}",
                d.id,
                p.at.as_micros(),
                p.content_bytes,
                p.padding_rx_cells,
                p.padding_tx_cells
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A download row read back from raw CSVs.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub id: u32,
    pub client: u32,
    pub size_bytes: u64,
    pub size_class: String,
    pub start_us: u64,
    pub end_us: Option<u64>,
    pub status: DownloadStatus,
    pub content_bytes: u64,
    pub padding_rx_cells: u64,
    pub padding_tx_cells: u64,
    pub progress: Vec<ProgressSample>,
}

impl RawRecord {
    pub fn padding_total(&self) -> u64 {
        self.padding_rx_cells + self.padding_tx_cells
    }
}

/// One loaded run directory.
#[derive(Debug)]
pub struct RunData {
    pub dir: PathBuf,
    pub meta: RunMeta,
    pub records: Vec<RawRecord>,
}

pub fn read_run_dir(dir: &Path) -> Result<RunData> {
    let meta_text = std::fs::read_to_string(dir.join(META_FILE))
        .map_err(|e| Error::parse(format!("{}: {e}", dir.join(META_FILE).display())))?;
    let meta: RunMeta = serde_json::from_str(&meta_text)?;

    let downloads = std::fs::read_to_string(dir.join(DOWNLOADS_FILE))?;
    let mut records = parse_downloads_csv(&downloads)?;

    let progress = std::fs::read_to_string(dir.join(PROGRESS_FILE))?;
    attach_progress(&mut records, &progress)?;

    Ok(RunData {
        dir: dir.to_path_buf(),
        meta,
        records,
    })
}

fn parse_downloads_csv(text: &str) -> Result<Vec<RawRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == DOWNLOADS_HEADER => {}
        other => return Err(Error::parse(format!("bad downloads.csv header: {other:?}"))),
    }
    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(Error::parse(format!("downloads.csv row {}: {} fields", n + 2, f.len())));
        }
        let int = |s: &str, what: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|_| Error::parse(format!("downloads.csv row {}: bad {what} `{s}`", n + 2)))
        };
        records.push(RawRecord {
            id: int(f[0], "download_id")? as u32,
            client: int(f[1], "client")? as u32,
            size_bytes: int(f[3], "size_bytes")?,
            size_class: f[4].to_string(),
            start_us: int(f[5], "start_us")?,
            end_us: if f[6].is_empty() { None } else { Some(int(f[6], "end_us")?) },
            status: DownloadStatus::parse(f[7])?,
            content_bytes: int(f[8], "content_bytes")?,
            padding_rx_cells: int(f[9], "padding_rx_cells")?,
            padding_tx_cells: int(f[10], "padding_tx_cells")?,
            progress: Vec::new(),
        });
    }
    Ok(records)
}

fn attach_progress(records: &mut [RawRecord], text: &str) -> Result<()> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == PROGRESS_HEADER => {}
        other => return Err(Error::parse(format!("bad progress.csv header: {other:?}"))),
    }
    // Rows are grouped by download in emission order; index by id.
    let mut by_id: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    for (i, r) in records.iter().enumerate() {
        by_id.insert(r.id, i);
    }
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::parse(format!("progress.csv row {}: {} fields", n + 2, f.len())));
        }
        let parse = |s: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|_| Error::parse(format!("progress.csv row {}: bad value `{s}`", n + 2)))
        };
        let id = parse(f[0])? as u32;
        let idx = *by_id
            .get(&id)
            .ok_or_else(|| Error::parse(format!("progress.csv row {}: unknown download {id}", n + 2)))?;
        records[idx].progress.push(ProgressSample {
            at: SimTime(parse(f[1])?),
            content_bytes: parse(f[2])?,
            padding_rx_cells: parse(f[3])?,
            padding_tx_cells: parse(f[4])?,
        });
    }
    Ok(())
}

/// Convert live records to the raw form without a disk round trip (tests).
pub fn records_from_output(output: &RunOutput) -> Vec<RawRecord> {
    output
        .downloads
        .iter()
        .map(|d| RawRecord {
            id: d.id,
            client: d.client_index,
            size_bytes: d.size_bytes,
            size_class: size_label(d.size_bytes),
            start_us: d.started_at.as_micros(),
            end_us: d.ended_at.map(|t| t.as_micros()),
            status: d.status.expect("terminal"),
            content_bytes: d.content_bytes(),
            padding_rx_cells: d.padding_rx_cells,
            padding_tx_cells: d.padding_tx_cells,
            progress: d.progress.clone(),
        })
        .collect()
}

/// Events.log parser used by the audits: key=value fields after `t=`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEvent {
    pub t_us: u64,
    pub kind: String,
    pub host: u32,
    pub circuit: CircuitId,
    pub direction: String,
    pub cell_kind: String,
}

pub fn parse_events_log(text: &str) -> Result<Vec<LogEvent>> {
    let mut events = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let mut t_us = None;
        let mut kind = None;
        let mut host = None;
        let mut circ = None;
        let mut dir = String::new();
        let mut cell_kind = String::new();
        for field in line.split(' ') {
            let Some((key, value)) = field.split_once('=') else {
                continue;
            };
            match key {
                "t" => t_us = value.parse::<u64>().ok(),
                "ev" => kind = Some(value.to_string()),
                "host" => host = value.parse::<u32>().ok(),
                "circ" => circ = value.parse::<u32>().ok(),
                "dir" => dir = value.to_string(),
                "kind" => cell_kind = value.to_string(),
                _ => {}
            }
        }
        match (t_us, kind, host, circ) {
            (Some(t_us), Some(kind), Some(host), Some(circ)) => events.push(LogEvent {
                t_us,
                kind,
                host,
                circuit: CircuitId(circ),
                direction: dir,
                cell_kind,
            }),
            _ => return Err(Error::parse(format!("events.log line {}: `{line}`", n + 1))),
        }
    }
    Ok(events)
}
