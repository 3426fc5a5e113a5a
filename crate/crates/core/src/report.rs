//! Report CSVs built from raw run output, one column per defense:
//!
//! - `ttb_<size>.csv`: `kib_count,<defense>_time_ms,...` median time to each
//!   progress mark over successful downloads.
//! - `pctb_<size>.csv`: `kib_count,<defense>_bwoh_pct,...` median receive
//!   bandwidth overhead at each mark over successful downloads.
//! - `err_<size>.csv`: `kib_count,<defense>_failure_pct,...` share of
//!   attempted downloads that never reached each mark.
//! - `scatter_<size>.csv`: `defense,padding_count,download_time_ms` one row
//!   per successful download.
//! - `scatter_r2_<size>.csv`: `defense,n,r_squared` OLS R² of download time
//!   on padding count.
//! - `pad_err_<size>.csv`: `padding_bin,<defense>_failure_pct,...` failure
//!   share per padding-count bin (bin label is the lower edge).
//!
//! Values are rounded half-up to one decimal (three for R²); absent values
//! are empty cells, never zeros. Downloads started inside the warmup window
//! are excluded everywhere. Records pool across runs before medians.

use crate::error::{Error, Result};
use crate::metrics::{
    failure_rate_at, fmt_fixed, is_success, kib_label, marks, median_f64, median_us_as_ms,
    ols_r2, overhead_pct_at, time_to_mark_us,
};
use crate::runfiles::{RawRecord, RunData};
use crate::workload::size_label;
use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

pub const DEFAULT_PAD_BIN_WIDTH: u64 = 50;

/// Runs pooled under one defense column.
#[derive(Debug)]
pub struct DefenseGroup {
    pub defense: String,
    pub runs: Vec<RunData>,
}

/// Group runs by defense name in order of first appearance, refusing
/// incompatible mixes.
pub fn group_runs(runs: Vec<RunData>) -> Result<Vec<DefenseGroup>> {
    let mut groups: Vec<DefenseGroup> = Vec::new();
    let mut scenario_hash: Option<String> = None;
    for run in runs {
        let hash = run.meta.manifest.scenario_hash.clone();
        match &scenario_hash {
            None => scenario_hash = Some(hash),
            Some(expect) if *expect != hash => {
                return Err(Error::Incompatible(format!(
                    "{}: scenario hash {hash} differs from {expect}; these runs are not comparable",
                    run.dir.display()
                )));
            }
            _ => {}
        }
        let name = run.meta.manifest.defense_name.clone();
        match groups.iter_mut().find(|g| g.defense == name) {
            Some(group) => {
                let expect = &group.runs[0].meta.manifest.defense_hash;
                if *expect != run.meta.manifest.defense_hash {
                    return Err(Error::Incompatible(format!(
                        "{}: defense `{name}` configured differently across runs in the group",
                        run.dir.display()
                    )));
                }
                group.runs.push(run);
            }
            None => groups.push(DefenseGroup {
                defense: name,
                runs: vec![run],
            }),
        }
    }
    if groups.is_empty() {
        return Err(Error::Incompatible("no runs given".into()));
    }
    Ok(groups)
}

/// Records of one group pooled across runs, warmup excluded.
fn pooled(group: &DefenseGroup) -> Vec<&RawRecord> {
    let mut out = Vec::new();
    for run in &group.runs {
        let warmup = run.meta.manifest.warmup_us;
        out.extend(run.records.iter().filter(|r| r.start_us >= warmup));
    }
    out
}

pub fn write_reports(groups: &[DefenseGroup], out: &Path, pad_bin_width: u64) -> Result<Vec<String>> {
    if pad_bin_width == 0 {
        return Err(Error::config("pad_bin_width", "must be positive"));
    }
    std::fs::create_dir_all(out)?;
    let records: Vec<Vec<&RawRecord>> = groups.iter().map(pooled).collect();

    // Size classes present anywhere, ascending.
    let sizes: BTreeSet<u64> = records
        .iter()
        .flatten()
        .map(|r| r.size_bytes)
        .collect();

    let mut written = Vec::new();
    for &size in &sizes {
        let label = size_label(size);
        let per_group: Vec<Vec<&RawRecord>> = records
            .iter()
            .map(|rs| rs.iter().copied().filter(|r| r.size_bytes == size).collect())
            .collect();

        written.push(write_ttb(groups, &per_group, size, &label, out)?);
        written.push(write_pctb(groups, &per_group, size, &label, out)?);
        written.push(write_err(groups, &per_group, size, &label, out)?);
        written.push(write_scatter(groups, &per_group, &label, out)?);
        written.push(write_scatter_r2(groups, &per_group, &label, out)?);
        written.push(write_pad_err(groups, &per_group, &label, out, pad_bin_width)?);
    }
    Ok(written)
}

fn create(out: &Path, name: &str) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(out.join(name))?))
}

fn write_ttb(
    groups: &[DefenseGroup],
    per_group: &[Vec<&RawRecord>],
    size: u64,
    label: &str,
    out: &Path,
) -> Result<String> {
    let name = format!("ttb_{label}.csv");
    let mut w = create(out, &name)?;
    write!(w, "kib_count")?;
    for g in groups {
        write!(w, ",{}_time_ms", g.defense)?;
    }
    writeln!(w)?;
    for mark in marks(size) {
        write!(w, "{}", kib_label(mark))?;
        for recs in per_group {
            let mut times: Vec<u64> = recs
                .iter()
                .filter(|r| is_success(r))
                .filter_map(|r| time_to_mark_us(r, mark))
                .collect();
            match median_us_as_ms(&mut times) {
                Some(ms) => write!(w, ",{}", fmt_fixed(ms, 1))?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(name)
}

fn write_pctb(
    groups: &[DefenseGroup],
    per_group: &[Vec<&RawRecord>],
    size: u64,
    label: &str,
    out: &Path,
) -> Result<String> {
    let name = format!("pctb_{label}.csv");
    let mut w = create(out, &name)?;
    write!(w, "kib_count")?;
    for g in groups {
        write!(w, ",{}_bwoh_pct", g.defense)?;
    }
    writeln!(w)?;
    for mark in marks(size) {
        write!(w, "{}", kib_label(mark))?;
        for recs in per_group {
            let mut pcts: Vec<f64> = recs
                .iter()
                .filter(|r| is_success(r))
                .filter_map(|r| overhead_pct_at(r, mark))
                .collect();
            match median_f64(&mut pcts) {
                Some(p) => write!(w, ",{}", fmt_fixed(p, 1))?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(name)
}

fn write_err(
    groups: &[DefenseGroup],
    per_group: &[Vec<&RawRecord>],
    size: u64,
    label: &str,
    out: &Path,
) -> Result<String> {
    let name = format!("err_{label}.csv");
    let mut w = create(out, &name)?;
    write!(w, "kib_count")?;
    for g in groups {
        write!(w, ",{}_failure_pct", g.defense)?;
    }
    writeln!(w)?;
    for mark in marks(size) {
        write!(w, "{}", kib_label(mark))?;
        for recs in per_group {
            match failure_rate_at(recs, mark) {
                Some(p) => write!(w, ",{}", fmt_fixed(p, 1))?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(name)
}

fn write_scatter(
    groups: &[DefenseGroup],
    per_group: &[Vec<&RawRecord>],
    label: &str,
    out: &Path,
) -> Result<String> {
    let name = format!("scatter_{label}.csv");
    let mut w = create(out, &name)?;
    writeln!(w, "defense,padding_count,download_time_ms")?;
    for (g, recs) in groups.iter().zip(per_group) {
        for r in recs.iter().filter(|r| is_success(r)) {
            let time_us = r.end_us.expect("success has an end") - r.start_us;
            writeln!(
                w,
                "{},{},{}",
                g.defense,
                r.padding_total(),
                fmt_fixed(time_us as f64 / 1000.0, 1)
            )?;
        }
    }
    w.flush()?;
    Ok(name)
}

fn write_scatter_r2(
    groups: &[DefenseGroup],
    per_group: &[Vec<&RawRecord>],
    label: &str,
    out: &Path,
) -> Result<String> {
    let name = format!("scatter_r2_{label}.csv");
    let mut w = create(out, &name)?;
    writeln!(w, "defense,n,r_squared")?;
    for (g, recs) in groups.iter().zip(per_group) {
        let successes: Vec<&&RawRecord> = recs.iter().filter(|r| is_success(r)).collect();
        let xs: Vec<f64> = successes.iter().map(|r| r.padding_total() as f64).collect();
        let ys: Vec<f64> = successes
            .iter()
            .map(|r| (r.end_us.unwrap() - r.start_us) as f64 / 1000.0)
            .collect();
        match ols_r2(&xs, &ys) {
            Some(r2) => writeln!(w, "{},{},{}", g.defense, xs.len(), fmt_fixed(r2, 3))?,
            None => writeln!(w, "{},{},", g.defense, xs.len())?,
        }
    }
    w.flush()?;
    Ok(name)
}

fn write_pad_err(
    groups: &[DefenseGroup],
    per_group: &[Vec<&RawRecord>],
    label: &str,
    out: &Path,
    bin_width: u64,
) -> Result<String> {
    let name = format!("pad_err_{label}.csv");
    let mut w = create(out, &name)?;
    write!(w, "padding_bin")?;
    for g in groups {
        write!(w, ",{}_failure_pct", g.defense)?;
    }
    writeln!(w)?;

    let bins: BTreeSet<u64> = per_group
        .iter()
        .flatten()
        .map(|r| r.padding_total() / bin_width * bin_width)
        .collect();
    for bin in bins {
        write!(w, "{bin}")?;
        for recs in per_group {
            let members: Vec<&&RawRecord> = recs
                .iter()
                .filter(|r| r.padding_total() / bin_width * bin_width == bin)
                .collect();
            if members.is_empty() {
                write!(w, ",")?;
            } else {
                let failed = members.iter().filter(|r| !is_success(r)).count();
                let pct = 100.0 * failed as f64 / members.len() as f64;
                write!(w, ",{}", fmt_fixed(pct, 1))?;
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(name)
}

/// Side-by-side latency overheads: trace-mode latency percentage against the
/// network-mode median time-to-last-byte overhead vs the control group.
pub fn write_compare(
    report_dir: &Path,
    trace_report: &Path,
    size_lbl: &str,
    control: &str,
    out_file: &Path,
) -> Result<()> {
    let ttb_path = report_dir.join(format!("ttb_{size_lbl}.csv"));
    let text = std::fs::read_to_string(&ttb_path)
        .map_err(|e| Error::parse(format!("{}: {e}", ttb_path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("empty ttb csv"))?;
    let columns: Vec<&str> = header.split(',').collect();
    let last = lines
        .last()
        .ok_or_else(|| Error::parse("ttb csv has no rows"))?;
    let cells: Vec<&str> = last.split(',').collect();

    let mut final_ms: Vec<(String, f64)> = Vec::new();
    for (col, cell) in columns.iter().zip(&cells).skip(1) {
        let Some(name) = col.strip_suffix("_time_ms") else {
            return Err(Error::parse(format!("unexpected ttb column `{col}`")));
        };
        if cell.is_empty() {
            return Err(Error::Incompatible(format!(
                "defense `{name}` has no successful downloads at the final mark"
            )));
        }
        let ms: f64 = cell
            .parse()
            .map_err(|_| Error::parse(format!("bad ttb cell `{cell}`")))?;
        final_ms.push((name.to_string(), ms));
    }
    let control_ms = final_ms
        .iter()
        .find(|(name, _)| name == control)
        .map(|(_, ms)| *ms)
        .ok_or_else(|| {
            Error::Incompatible(format!("control defense `{control}` missing from network report"))
        })?;

    // defense -> latency_pct, verbatim from the trace report.
    let trace_text = std::fs::read_to_string(trace_report)
        .map_err(|e| Error::parse(format!("{}: {e}", trace_report.display())))?;
    let mut trace_latency: Vec<(String, String)> = Vec::new();
    let mut trace_lines = trace_text.lines();
    match trace_lines.next() {
        Some("defense,bandwidth_pct,latency_pct") => {}
        other => return Err(Error::parse(format!("bad trace report header: {other:?}"))),
    }
    for line in trace_lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::parse(format!("bad trace report row `{line}`")));
        }
        trace_latency.push((f[0].to_string(), f[2].to_string()));
    }
    for (name, _) in &trace_latency {
        if !final_ms.iter().any(|(n, _)| n == name) {
            return Err(Error::Incompatible(format!(
                "trace report defense `{name}` not present in network report"
            )));
        }
    }

    let mut w = std::io::BufWriter::new(std::fs::File::create(out_file)?);
    writeln!(w, "defense,trace_latency_pct,network_ttlb_overhead_pct")?;
    for (name, ms) in &final_ms {
        let trace_cell = if name == control {
            // The control transforms nothing; its trace latency is zero by
            // definition.
            Some("0.0".to_string())
        } else {
            trace_latency.iter().find(|(n, _)| n == name).map(|(_, v)| v.clone())
        };
        let Some(trace_cell) = trace_cell else {
            continue; // network-only defense without a trace run
        };
        let overhead = 100.0 * (ms - control_ms) / control_ms;
        writeln!(w, "{},{},{}", name, trace_cell, fmt_fixed(overhead, 1))?;
    }
    w.flush()?;
    Ok(())
}
