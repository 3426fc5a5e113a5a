//! Progress-indexed measurements over raw download records: receive
//! bandwidth overhead, time-to-byte, failure-rate curves, padding scatter
//! with OLS R², and padding-count failure bins.
//!
//! Overhead and time tables use successful downloads only; failure rates use
//! every attempted download (partial progress of failed downloads counts
//! toward reaching a point, never toward medians). Records are pooled across
//! runs before medians are taken.

use crate::runfiles::RawRecord;
use crate::workload::DownloadStatus;
use crate::CELL_SIZE;

/// Progress grid for a size class: ceil(size*k/100) bytes for k = 1..=100.
/// The final mark is exactly the size class.
pub fn marks(size_bytes: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(100);
    for k in 1..=100u64 {
        let mark = (size_bytes * k).div_ceil(100);
        if out.last() != Some(&mark) {
            out.push(mark);
        }
    }
    out
}

/// KiB label for a byte mark, two decimals.
pub fn kib_label(mark_bytes: u64) -> String {
    fmt_fixed(mark_bytes as f64 / 1024.0, 2)
}

pub fn is_success(r: &RawRecord) -> bool {
    r.status == DownloadStatus::Success
}

/// First progress sample at or past `mark`, if the record got that far.
fn sample_at_mark(record: &RawRecord, mark: u64) -> Option<&crate::workload::ProgressSample> {
    // Progress is strictly increasing in bytes; binary search for the first
    // sample with content_bytes >= mark.
    let idx = record
        .progress
        .partition_point(|p| p.content_bytes < mark);
    record.progress.get(idx)
}

/// Microseconds from download start until `mark` content bytes arrived.
pub fn time_to_mark_us(record: &RawRecord, mark: u64) -> Option<u64> {
    sample_at_mark(record, mark).map(|p| p.at.as_micros() - record.start_us)
}

/// Receive bandwidth overhead at `mark`: padding bytes received by the time
/// content reached the mark, as a percentage of the mark.
pub fn overhead_pct_at(record: &RawRecord, mark: u64) -> Option<f64> {
    let p = sample_at_mark(record, mark)?;
    Some(100.0 * (p.padding_rx_cells * CELL_SIZE) as f64 / mark as f64)
}

/// Percentage of attempted records that never reached `mark`.
pub fn failure_rate_at(records: &[&RawRecord], mark: u64) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    let reached = records
        .iter()
        .filter(|r| sample_at_mark(r, mark).is_some())
        .count();
    Some(100.0 * (records.len() - reached) as f64 / records.len() as f64)
}

/// Median of integer microseconds, reported in milliseconds.
pub fn median_us_as_ms(values: &mut [u64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    let med_us = if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    };
    Some(med_us / 1000.0)
}

pub fn median_f64(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in metrics"));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Ordinary least squares R² of y on x. `None` below two points; a zero
/// variance regressor yields 0 by convention.
pub fn ols_r2(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mean_x = xs.iter().sum::<f64>() / nf;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mean_x;
        let dy = ys[i] - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Some(0.0);
    }
    if syy == 0.0 {
        // Constant response is fit perfectly by the constant line.
        return Some(1.0);
    }
    Some((sxy * sxy) / (sxx * syy))
}

/// Fixed-point rounding used in every report CSV: round half up at `places`
/// decimals, formatted by integer math so any reimplementation (in any
/// language) that follows the same two steps produces identical bytes.
pub fn fmt_fixed(x: f64, places: u32) -> String {
    let scale = 10u64.pow(places) as f64;
    let d = (x * scale + 0.5).floor() as i64;
    let sign = if d < 0 { "-" } else { "" };
    let a = d.unsigned_abs();
    let scale = 10u64.pow(places);
    let ip = a / scale;
    let fp = a % scale;
    format!("{sign}{ip}.{fp:0width$}", width = places as usize)
}
