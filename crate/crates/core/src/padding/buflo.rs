//! BuFlo: constant-rate slotting at a tunnel endpoint.
//!
//! While a driver is active, its endpoint egresses exactly one cell per slot
//! on the circuit: the head of the hold queue if any content is waiting,
//! otherwise a padding cell. Content arriving between slots waits, which is
//! what makes BuFlo a delaying defense. Slots run at `episode_start + k*slot`
//! (k >= 1) until the hold queue is empty and the episode has lasted at least
//! `min_duration`, after which the driver parks; the next enqueue starts a
//! fresh episode.

use crate::error::{Error, Result};
use crate::net::{Cell, CircuitId, Direction, HostId};
use crate::time::SimTime;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

fn default_min_duration() -> u64 {
    10_000_000
}

fn default_directions() -> Vec<Direction> {
    vec![Direction::ClientBound, Direction::ServerBound]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufloConfig {
    /// Slot length (tau), microseconds.
    pub slot_us: u64,
    /// Minimum episode length; padding continues until it has elapsed.
    #[serde(default = "default_min_duration")]
    pub min_duration_us: u64,
    /// Which directions are slotted. Client-bound is driven at the middle
    /// relay, server-bound at the client.
    #[serde(default = "default_directions")]
    pub directions: Vec<Direction>,
}

impl BufloConfig {
    pub fn validate(&self, field: &str) -> Result<()> {
        if self.slot_us == 0 {
            return Err(Error::config(format!("{field}.slot_us"), "slot must be positive"));
        }
        if self.directions.is_empty() {
            return Err(Error::config(
                format!("{field}.directions"),
                "at least one direction required",
            ));
        }
        Ok(())
    }
}

/// Per-(circuit, direction) slot driver state.
#[derive(Debug)]
pub struct BufloDriver {
    pub circuit: CircuitId,
    /// Endpoint host whose egress this driver feeds.
    pub host: HostId,
    pub direction: Direction,
    pub slot_us: u64,
    pub min_duration_us: u64,
    pub hold: VecDeque<Cell>,
    pub active: bool,
    pub episode_start: SimTime,
}

impl BufloDriver {
    pub fn new(cfg: &BufloConfig, circuit: CircuitId, host: HostId, direction: Direction) -> Self {
        BufloDriver {
            circuit,
            host,
            direction,
            slot_us: cfg.slot_us,
            min_duration_us: cfg.min_duration_us,
            hold: VecDeque::new(),
            active: false,
            episode_start: SimTime::ZERO,
        }
    }

    /// Queue a non-padding cell for slotted release. Returns true when the
    /// driver was parked and the caller must start a new episode.
    pub fn enqueue(&mut self, cell: Cell) -> bool {
        self.hold.push_back(cell);
        !self.active
    }

    pub fn begin_episode(&mut self, now: SimTime) {
        debug_assert!(!self.active);
        self.active = true;
        self.episode_start = now;
    }

    /// Take the cell to egress this slot; `None` means send padding.
    pub fn slot_emission(&mut self) -> Option<Cell> {
        self.hold.pop_front()
    }

    /// Whether another slot follows the one that just fired at `now`.
    pub fn continues(&self, now: SimTime) -> bool {
        !self.hold.is_empty() || now.saturating_sub(self.episode_start) < self.min_duration_us
    }

    pub fn park(&mut self) {
        debug_assert!(self.hold.is_empty());
        self.active = false;
    }
}
