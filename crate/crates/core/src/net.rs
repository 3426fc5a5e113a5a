//! Hosts, rate-limited pipes, links, and three-hop circuits.
//!
//! Rate limiting is store-and-forward serialization through a single
//! aggregate egress pipe per host (plus an ingress pipe bounded by the
//! host's download rate). The egress pipe is the contention point that turns
//! network-wide padding into queueing delay.

use crate::time::SimTime;
use crate::CELL_SIZE;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HostId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CircuitId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Client,
    Guard,
    Middle,
    Exit,
    Server,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::Client => "client",
            Role::Guard => "guard",
            Role::Middle => "middle",
            Role::Exit => "exit",
            Role::Server => "server",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Content,
    Padding,
    Control,
}

impl CellKind {
    pub fn is_padding(self) -> bool {
        matches!(self, CellKind::Padding)
    }

    pub fn label(self) -> &'static str {
        match self {
            CellKind::Content => "content",
            CellKind::Padding => "padding",
            CellKind::Control => "control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ClientBound,
    ServerBound,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::ClientBound => "client_bound",
            Direction::ServerBound => "server_bound",
        }
    }
}

/// A 512-byte transmission unit. `payload` is the application bytes carried
/// (content cells only; at most `cell_payload_bytes` of the cell).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub id: u64,
    pub kind: CellKind,
    pub circuit: CircuitId,
    pub direction: Direction,
    pub payload: u32,
    pub created_at: SimTime,
}

/// Host state: identity, rates, and the egress FIFO with its service flag.
/// The front of `egress` is the cell currently being serialized.
#[derive(Debug)]
pub struct Host {
    pub id: HostId,
    pub role: Role,
    pub up_rate: u64,
    pub down_rate: u64,
    pub queue_cap: Option<usize>,
    pub egress: VecDeque<Cell>,
    pub egress_busy: bool,
    pub ingress_busy_until: SimTime,
    /// Accumulated egress busy time, for utilization reporting.
    pub busy_us: u64,
}

impl Host {
    pub fn new(id: HostId, role: Role, up_rate: u64, down_rate: u64, queue_cap: Option<usize>) -> Self {
        assert!(up_rate > 0 && down_rate > 0, "host rates must be positive");
        Host {
            id,
            role,
            up_rate,
            down_rate,
            queue_cap,
            egress: VecDeque::new(),
            egress_busy: false,
            ingress_busy_until: SimTime::ZERO,
            busy_us: 0,
        }
    }

    /// Time to push one cell through the egress pipe, in microseconds.
    pub fn egress_serialization_us(&self) -> u64 {
        serialization_us(self.up_rate)
    }

    pub fn ingress_serialization_us(&self) -> u64 {
        serialization_us(self.down_rate)
    }
}

/// Microseconds to serialize one 512-byte cell at `rate` bytes/sec.
pub fn serialization_us(rate: u64) -> u64 {
    CELL_SIZE * 1_000_000 / rate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircuitStatus {
    Open,
    Closed,
    Failed,
}

/// A three-hop circuit. `path` is the full forwarding order
/// `[client, guard, middle, exit, server]`; server-bound cells walk it
/// forward, client-bound cells walk it backward.
#[derive(Debug)]
pub struct Circuit {
    pub id: CircuitId,
    pub path: [HostId; 5],
    /// Link latency between `path[i]` and `path[i+1]`, microseconds.
    pub link_latency_us: [u64; 4],
    pub status: CircuitStatus,
    pub opened_at: SimTime,
}

impl Circuit {
    pub fn client(&self) -> HostId {
        self.path[0]
    }

    pub fn middle(&self) -> HostId {
        self.path[2]
    }

    pub fn server(&self) -> HostId {
        self.path[4]
    }

    pub fn position_of(&self, host: HostId) -> Option<usize> {
        self.path.iter().position(|&h| h == host)
    }

    /// Next hop for a cell leaving `host` in `direction`, with the link
    /// latency to it. `None` when `host` is the terminal endpoint.
    pub fn next_hop(&self, host: HostId, direction: Direction) -> Option<(HostId, u64)> {
        let pos = self.position_of(host)?;
        match direction {
            Direction::ServerBound if pos < 4 => Some((self.path[pos + 1], self.link_latency_us[pos])),
            Direction::ClientBound if pos > 0 => Some((self.path[pos - 1], self.link_latency_us[pos - 1])),
            _ => None,
        }
    }
}

/// Counters for dropped/ignored cells; all start at zero and stay there in a
/// healthy closed run.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct DropStats {
    pub closed_circuit: u64,
    pub unknown_circuit: u64,
    pub queue_full: u64,
    pub late_content: u64,
}

impl DropStats {
    pub fn total(&self) -> u64 {
        self.closed_circuit + self.unknown_circuit + self.queue_full + self.late_content
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialization_matches_hand_arithmetic() {
        // 512 bytes at 512_000 B/s is exactly 1 ms.
        assert_eq!(serialization_us(512_000), 1_000);
        // 100 cells/s bottleneck: 51_200 B/s -> 10 ms per cell.
        assert_eq!(serialization_us(51_200), 10_000);
    }

    fn circuit() -> Circuit {
        Circuit {
            id: CircuitId(1),
            path: [HostId(0), HostId(1), HostId(2), HostId(3), HostId(4)],
            link_latency_us: [10, 20, 30, 40],
            status: CircuitStatus::Open,
            opened_at: SimTime::ZERO,
        }
    }

    #[test]
    fn forwarding_walks_the_path_in_order() {
        let c = circuit();
        assert_eq!(c.next_hop(HostId(0), Direction::ServerBound), Some((HostId(1), 10)));
        assert_eq!(c.next_hop(HostId(2), Direction::ServerBound), Some((HostId(3), 30)));
        assert_eq!(c.next_hop(HostId(2), Direction::ClientBound), Some((HostId(1), 20)));
        assert_eq!(c.next_hop(HostId(0), Direction::ClientBound), None);
        assert_eq!(c.next_hop(HostId(4), Direction::ServerBound), None);
        assert_eq!(c.next_hop(HostId(9), Direction::ServerBound), None);
    }
}
