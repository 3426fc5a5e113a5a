//! Event-log audits for properties stated over whole runs.

use crate::error::{Error, Result};
use crate::runfiles::LogEvent;
use std::collections::BTreeMap;

/// Result of the BuFlo slot-law audit.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct BufloAudit {
    /// Distinct (circuit, endpoint host, direction) drivers seen.
    pub drivers: usize,
    pub slots: u64,
    pub violations: u64,
}

/// Check the slot law over an events log: at a slotted endpoint, every
/// egress-queue commitment for the circuit in the driven direction happens
/// at a slot boundary, exactly one per slot, and slot boundaries within an
/// episode are consecutive multiples of the slot length.
pub fn audit_buflo_slots(events: &[LogEvent], slot_us: u64) -> Result<BufloAudit> {
    if slot_us == 0 {
        return Err(Error::config("slot_us", "must be positive"));
    }
    type Key = (u32, u32, String);
    let mut slot_times: BTreeMap<Key, Vec<u64>> = BTreeMap::new();
    let mut enqueue_times: BTreeMap<Key, Vec<u64>> = BTreeMap::new();
    for e in events {
        let key = (e.circuit.0, e.host, e.direction.clone());
        match e.kind.as_str() {
            "slot" => slot_times.entry(key).or_default().push(e.t_us),
            "enqueue" => enqueue_times.entry(key).or_default().push(e.t_us),
            _ => {}
        }
    }

    let mut audit = BufloAudit {
        drivers: slot_times.len(),
        ..Default::default()
    };
    for (key, slots) in &slot_times {
        audit.slots += slots.len() as u64;
        // Within an episode consecutive boundaries sit exactly slot_us
        // apart; a longer gap is a park/reactivate break. Anything shorter
        // means two emissions inside one slot.
        for pair in slots.windows(2) {
            if pair[1] - pair[0] < slot_us {
                audit.violations += 1;
            }
        }
        // One egress commitment per slot, none in between.
        let empty = Vec::new();
        let enqueues = enqueue_times.get(key).unwrap_or(&empty);
        if enqueues != slots {
            audit.violations += 1;
        }
    }
    Ok(audit)
}
