//! Trace-mode evaluation: apply a defense to a recorded cell trace.
//!
//! This is the traditional methodology the network simulation is contrasted
//! against. The trace is the client's view of one connection; machines run
//! at both tunnel endpoints on a zero-latency timeline, driven by the same
//! runtime as the network simulation, so trace-vs-network differences come
//! from network contention alone. Padding-only defenses leave every content
//! timestamp untouched, which is exactly why this methodology reports them
//! as delay-free; BuFlo reslots content and may delay it.

use crate::engine::{EventQueue, RngStream};
use crate::error::{Error, Result};
use crate::net::{CellKind, Direction};
use crate::padding::{
    BufloDriver, CompiledDefense, DefenseSpec, EndpointSide, MachineCmd, MachineInstance, Trigger,
};
use crate::time::SimTime;
use std::io::Write;
use std::path::Path;

/// One trace entry. Directions are from the client's perspective:
/// `client_bound` cells arrive at the client, `server_bound` cells leave it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceCell {
    pub t_us: u64,
    pub direction: Direction,
    pub kind: CellKind,
}

#[derive(Debug, Clone, Default)]
pub struct CellTrace {
    pub cells: Vec<TraceCell>,
}

/// Defended trace plus, for each output cell, the input index it came from
/// (padding cells map to `None`).
#[derive(Debug, Clone, Default)]
pub struct DefendedTrace {
    pub cells: Vec<TraceCell>,
    pub original_index: Vec<Option<usize>>,
}

impl CellTrace {
    pub fn validate(&self) -> Result<()> {
        let mut last = 0u64;
        for (i, c) in self.cells.iter().enumerate() {
            if c.t_us < last {
                return Err(Error::parse(format!(
                    "trace timestamps must be non-decreasing (row {i})"
                )));
            }
            last = c.t_us;
        }
        Ok(())
    }

    pub fn last_content_t(&self) -> Option<u64> {
        self.cells
            .iter()
            .rev()
            .find(|c| !c.kind.is_padding())
            .map(|c| c.t_us)
    }
}

impl DefendedTrace {
    pub fn content_cells(&self) -> usize {
        self.cells.iter().filter(|c| !c.kind.is_padding()).count()
    }

    pub fn padding_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.kind.is_padding()).count()
    }

    pub fn last_content_t(&self) -> Option<u64> {
        self.cells
            .iter()
            .rev()
            .find(|c| !c.kind.is_padding())
            .map(|c| c.t_us)
    }
}

pub const TRACE_HEADER: &str = "timestamp_us,direction,kind";

pub fn read_trace_csv(path: &Path) -> Result<CellTrace> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
    parse_trace_csv(&text)
}

pub fn parse_trace_csv(text: &str) -> Result<CellTrace> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TRACE_HEADER => {}
        other => return Err(Error::parse(format!("bad trace header: {other:?}"))),
    }
    let mut cells = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::parse(format!("trace row {}: `{line}`", n + 2)));
        }
        let t_us = f[0]
            .parse::<u64>()
            .map_err(|_| Error::parse(format!("trace row {}: bad timestamp `{}`", n + 2, f[0])))?;
        let direction = match f[1] {
            "client_bound" => Direction::ClientBound,
            "server_bound" => Direction::ServerBound,
            other => return Err(Error::parse(format!("trace row {}: bad direction `{other}`", n + 2))),
        };
        let kind = match f[2] {
            "content" => CellKind::Content,
            "padding" => CellKind::Padding,
            "control" => CellKind::Control,
            other => return Err(Error::parse(format!("trace row {}: bad kind `{other}`", n + 2))),
        };
        cells.push(TraceCell { t_us, direction, kind });
    }
    let trace = CellTrace { cells };
    trace.validate()?;
    Ok(trace)
}

pub fn write_trace_csv(cells: &[TraceCell], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{TRACE_HEADER}")?;
    for c in cells {
        writeln!(w, "{},{},{}", c.t_us, c.direction.label(), c.kind.label())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TrEv {
    Input(usize),
    MachineTimer(usize),
    BufloSlot(usize),
}

/// Apply a defense to a trace. The circuit is considered open at t=0.
pub fn apply_defense_to_trace(
    trace: &CellTrace,
    defense: &DefenseSpec,
    seed: u64,
) -> Result<DefendedTrace> {
    trace.validate()?;
    let compiled: CompiledDefense = defense.compile("defense")?;

    let mut machines: Vec<MachineInstance> = Vec::new();
    for (i, spec) in compiled.machines.iter().enumerate() {
        let m = spec.compile(&format!("defense.machines[{i}]"))?;
        let rng = RngStream::new(seed, &format!("trace.machine.{}", m.name));
        machines.push(MachineInstance::new(m, rng));
    }

    let mut queue: EventQueue<TrEv> = EventQueue::new();
    let mut buflos: Vec<BufloDriver> = Vec::new();
    if let Some(cfg) = &compiled.buflo {
        for &direction in &cfg.directions {
            // Host ids are placeholders in trace mode.
            let host = crate::net::HostId(match direction {
                Direction::ServerBound => 0,
                Direction::ClientBound => 1,
            });
            let mut driver = BufloDriver::new(cfg, crate::net::CircuitId(0), host, direction);
            driver.begin_episode(SimTime::ZERO);
            let idx = buflos.len();
            buflos.push(driver);
            queue.schedule(SimTime(cfg.slot_us), TrEv::BufloSlot(idx));
        }
    }

    for (i, cell) in trace.cells.iter().enumerate() {
        queue.schedule(SimTime(cell.t_us), TrEv::Input(i));
    }

    let mut out = DefendedTrace::default();
    let end = SimTime(u64::MAX);
    while let Some(event) = queue.pop_until(end) {
        let now = queue.now();
        match event.payload {
            TrEv::Input(i) => {
                let cell = trace.cells[i];
                // Feed both endpoints; zero tunnel latency in trace mode.
                let (client_tr, middle_tr) = match cell.direction {
                    Direction::ServerBound => (Trigger::NonPaddingSent, Trigger::NonPaddingReceived),
                    Direction::ClientBound => (Trigger::NonPaddingReceived, Trigger::NonPaddingSent),
                };
                if let Some(b) = buflos
                    .iter()
                    .position(|d| d.direction == cell.direction)
                {
                    let net_cell = crate::net::Cell {
                        id: i as u64,
                        kind: cell.kind,
                        circuit: crate::net::CircuitId(0),
                        direction: cell.direction,
                        payload: 0,
                        created_at: now,
                    };
                    if buflos[b].enqueue(net_cell) {
                        buflos[b].begin_episode(now);
                        let slot = buflos[b].slot_us;
                        queue.schedule_in(slot, TrEv::BufloSlot(b));
                    }
                } else {
                    out.cells.push(cell);
                    out.original_index.push(Some(i));
                }
                dispatch_trigger(&mut machines, &mut queue, EndpointSide::Client, client_tr);
                dispatch_trigger(&mut machines, &mut queue, EndpointSide::Middle, middle_tr);
            }
            TrEv::MachineTimer(m) => {
                machines[m].pending_timer = None;
                if !machines[m].timer_fired() {
                    continue;
                }
                let endpoint = machines[m].spec.endpoint;
                let direction = match endpoint {
                    EndpointSide::Client => Direction::ServerBound,
                    EndpointSide::Middle => Direction::ClientBound,
                };
                out.cells.push(TraceCell {
                    t_us: now.as_micros(),
                    direction,
                    kind: CellKind::Padding,
                });
                out.original_index.push(None);
                let mut cmds = Vec::new();
                machines[m].after_padding_sent(&mut cmds);
                apply_cmds(&mut machines, &mut queue, m, &cmds);
                // The opposite endpoint sees the padding immediately.
                let other = match endpoint {
                    EndpointSide::Client => EndpointSide::Middle,
                    EndpointSide::Middle => EndpointSide::Client,
                };
                dispatch_trigger(&mut machines, &mut queue, other, Trigger::PaddingReceived);
            }
            TrEv::BufloSlot(b) => {
                let (cell, orig) = match buflos[b].slot_emission() {
                    Some(held) => (
                        TraceCell {
                            t_us: now.as_micros(),
                            direction: held.direction,
                            kind: held.kind,
                        },
                        Some(held.id as usize),
                    ),
                    None => (
                        TraceCell {
                            t_us: now.as_micros(),
                            direction: buflos[b].direction,
                            kind: CellKind::Padding,
                        },
                        None,
                    ),
                };
                out.cells.push(cell);
                out.original_index.push(orig);
                if buflos[b].continues(now) {
                    let slot = buflos[b].slot_us;
                    queue.schedule_in(slot, TrEv::BufloSlot(b));
                } else {
                    buflos[b].park();
                }
            }
        }
    }
    Ok(out)
}

fn dispatch_trigger(
    machines: &mut [MachineInstance],
    queue: &mut EventQueue<TrEv>,
    endpoint: EndpointSide,
    trigger: Trigger,
) {
    for m in 0..machines.len() {
        if machines[m].spec.endpoint != endpoint {
            continue;
        }
        let mut cmds = Vec::new();
        machines[m].on_trigger(trigger, &mut cmds);
        apply_cmds(machines, queue, m, &cmds);
    }
}

fn apply_cmds(
    machines: &mut [MachineInstance],
    queue: &mut EventQueue<TrEv>,
    m: usize,
    cmds: &[MachineCmd],
) {
    for cmd in cmds {
        match cmd {
            MachineCmd::CancelTimer => {
                if let Some(h) = machines[m].pending_timer.take() {
                    queue.cancel(h);
                }
            }
            MachineCmd::ScheduleTimer { delay_us } => {
                debug_assert!(machines[m].pending_timer.is_none());
                let h = queue.schedule_in(*delay_us, TrEv::MachineTimer(m));
                machines[m].pending_timer = Some(h);
            }
        }
    }
}

/// Bandwidth and latency overhead of a defended trace against its original.
/// Bandwidth is padding cells as a percentage of content cells; latency
/// compares last-content times. `None` when the original is empty or its
/// last content sits at t=0 (degenerate denominator).
pub fn trace_overheads(orig: &CellTrace, defended: &DefendedTrace) -> (Option<f64>, Option<f64>) {
    let content = defended.content_cells();
    let padding = defended.padding_cells();
    let bandwidth = (content > 0).then(|| 100.0 * padding as f64 / content as f64);
    let latency = match (orig.last_content_t(), defended.last_content_t()) {
        (Some(orig_last), Some(def_last)) if orig_last > 0 => {
            Some(100.0 * (def_last as f64 - orig_last as f64) / orig_last as f64)
        }
        _ => None,
    };
    (bandwidth, latency)
}

/// Write a one-row trace evaluation report for a defense.
pub fn write_trace_report(
    defense_name: &str,
    bandwidth_pct: Option<f64>,
    latency_pct: Option<f64>,
    path: &Path,
) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "defense,bandwidth_pct,latency_pct")?;
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| crate::metrics::fmt_fixed(x, 1));
    writeln!(w, "{},{},{}", defense_name, fmt(bandwidth_pct), fmt(latency_pct))?;
    w.flush()?;
    Ok(())
}

/// Build a client-perspective cell trace from one recorded download: the
/// request cell, then one client-bound content cell per progress sample,
/// timestamps relative to the download start.
pub fn trace_from_record(record: &crate::runfiles::RawRecord) -> CellTrace {
    let mut cells = Vec::with_capacity(record.progress.len() + 1);
    cells.push(TraceCell {
        t_us: 0,
        direction: Direction::ServerBound,
        kind: CellKind::Control,
    });
    for p in &record.progress {
        cells.push(TraceCell {
            t_us: p.at.as_micros() - record.start_us,
            direction: Direction::ClientBound,
            kind: CellKind::Content,
        });
    }
    CellTrace { cells }
}
