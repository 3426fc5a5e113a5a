//! padnet simulates a Tor-like overlay network at cell granularity to measure
//! what circuit padding defenses cost once every circuit runs them.
//!
//! The crate is organized around a deterministic discrete-event core:
//!
//! - [`engine`]: virtual clock, event queue, and seeded per-entity random
//!   streams with the distribution vocabulary used by padding machines.
//! - [`net`]: hosts, rate-limited egress/ingress pipes, links, and three-hop
//!   circuits. Queueing here is what turns padding into delay.
//! - [`padding`]: the event-driven padding machine runtime, the BuFlo slot
//!   driver, and the defense factories (`none`, `burst_extend`,
//!   `adaptive_gap`, `buflo`, `custom`).
//! - [`workload`]: benchmarking clients performing fixed-size downloads and
//!   background clients that load the network.
//! - [`sim`]: the per-run world that owns all of the above and dispatches
//!   events.
//! - [`metrics`] and [`report`]: progress-indexed overhead, time-to-byte and
//!   failure tables, padding scatter/bins, and the CSV reports built from raw
//!   run output.
//! - [`trace`]: trace-mode evaluation, which applies the same machine runtime
//!   to a recorded cell trace and shows why padding-only defenses look
//!   delay-free there.
//! - [`scenario`] and [`runfiles`]: experiment configuration, run manifests,
//!   and the raw per-run CSV files.
//!
//! Every run is a pure function of (scenario, seed): identical inputs produce
//! byte-identical raw output files.

pub mod audit;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod net;
pub mod padding;
pub mod report;
pub mod runfiles;
pub mod scenario;
pub mod sim;
pub mod time;
pub mod trace;
pub mod workload;

pub use error::Error;
pub use time::SimTime;

/// Wire size of every cell, in bytes.
pub const CELL_SIZE: u64 = 512;
