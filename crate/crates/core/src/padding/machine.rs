//! Event-driven stochastic padding machines.
//!
//! A machine lives at one endpoint of the client<->middle tunnel and reacts
//! to cell events on its circuit. Taking a transition cancels any pending
//! padding timer, enters the target state, and samples that state's
//! inter-arrival distribution; a finite sample arms the (single) padding
//! timer, the infinity sentinel feeds the `InfinitySampled` trigger instead.
//! The same runtime drives both the network simulation and trace mode, so a
//! machine's padding decisions depend only on the cell-event sequence and its
//! seed.

use crate::engine::{DistSpec, EventHandle, RngStream, Sample, TokenState};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Cell events a machine can react to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Trigger {
    NonPaddingSent,
    NonPaddingReceived,
    PaddingSent,
    PaddingReceived,
    LengthExceeded,
    InfinitySampled,
}

impl Trigger {
    pub const ALL: [Trigger; 6] = [
        Trigger::NonPaddingSent,
        Trigger::NonPaddingReceived,
        Trigger::PaddingSent,
        Trigger::PaddingReceived,
        Trigger::LengthExceeded,
        Trigger::InfinitySampled,
    ];

    fn index(self) -> usize {
        match self {
            Trigger::NonPaddingSent => 0,
            Trigger::NonPaddingReceived => 1,
            Trigger::PaddingSent => 2,
            Trigger::PaddingReceived => 3,
            Trigger::LengthExceeded => 4,
            Trigger::InfinitySampled => 5,
        }
    }
}

/// Which tunnel endpoint a machine runs on. The endpoint fixes the injection
/// direction: client machines pad server-bound, middle machines client-bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointSide {
    Client,
    Middle,
}

impl EndpointSide {
    pub fn label(self) -> &'static str {
        match self {
            EndpointSide::Client => "client",
            EndpointSide::Middle => "middle",
        }
    }
}

/// One machine state as written in a scenario file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    /// Padding inter-arrival distribution (microseconds). A state without one
    /// never arms the padding timer.
    #[serde(default)]
    pub iat: Option<DistSpec>,
    /// Padding cells allowed per state visit; unset means unlimited.
    #[serde(default)]
    pub length: Option<DistSpec>,
    /// Hard cap applied on top of a sampled length.
    #[serde(default)]
    pub length_cap: Option<u64>,
    #[serde(default)]
    pub transitions: BTreeMap<Trigger, String>,
}

/// A padding machine as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub name: String,
    pub endpoint: EndpointSide,
    pub start_state: String,
    /// Total padding cells this machine may inject per circuit; unset means
    /// unbounded.
    #[serde(default)]
    pub budget_cells: Option<u64>,
    pub states: BTreeMap<String, StateSpec>,
}

#[derive(Debug)]
pub struct CompiledState {
    pub name: String,
    pub iat: Option<DistSpec>,
    pub length: Option<DistSpec>,
    pub length_cap: Option<u64>,
    pub transitions: [Option<usize>; 6],
}

/// Validated machine with state names resolved to indices.
#[derive(Debug)]
pub struct CompiledMachine {
    pub name: String,
    pub endpoint: EndpointSide,
    pub start: usize,
    pub budget: Option<u64>,
    pub states: Vec<CompiledState>,
}

impl MachineSpec {
    pub fn compile(&self, field: &str) -> Result<Arc<CompiledMachine>> {
        if self.states.is_empty() {
            return Err(Error::config(format!("{field}.states"), "machine has no states"));
        }
        let names: Vec<&String> = self.states.keys().collect();
        let index_of = |name: &str| names.iter().position(|n| n.as_str() == name);

        let start = index_of(&self.start_state).ok_or_else(|| {
            Error::config(
                format!("{field}.start_state"),
                format!("unknown state `{}`", self.start_state),
            )
        })?;

        let mut states = Vec::with_capacity(self.states.len());
        for (name, spec) in &self.states {
            let state_field = format!("{field}.states.{name}");
            if let Some(iat) = &spec.iat {
                iat.validate(&format!("{state_field}.iat"))?;
            }
            if let Some(len) = &spec.length {
                len.validate(&format!("{state_field}.length"))?;
            }
            let mut transitions = [None; 6];
            for (trigger, target) in &spec.transitions {
                let target_idx = index_of(target).ok_or_else(|| {
                    Error::config(
                        format!("{state_field}.transitions"),
                        format!("transition {trigger:?} targets unknown state `{target}`"),
                    )
                })?;
                transitions[trigger.index()] = Some(target_idx);
            }
            states.push(CompiledState {
                name: name.clone(),
                iat: spec.iat.clone(),
                length: spec.length.clone(),
                length_cap: spec.length_cap,
                transitions,
            });
        }

        Ok(Arc::new(CompiledMachine {
            name: self.name.clone(),
            endpoint: self.endpoint,
            start,
            budget: self.budget_cells,
            states,
        }))
    }
}

/// Timer commands a machine hands back to whoever drives it. A `Schedule` is
/// always preceded by a `Cancel`, so the driver can keep the one-pending-timer
/// invariant by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachineCmd {
    CancelTimer,
    ScheduleTimer { delay_us: u64 },
}

/// Zero-time transition chains (e.g. InfinitySampled loops) are cut off here.
const MAX_CHAIN: u8 = 16;

/// Live per-circuit machine state.
#[derive(Debug)]
pub struct MachineInstance {
    pub spec: Arc<CompiledMachine>,
    state: usize,
    visit_sent: u64,
    /// Padding allowed this visit; `None` is unlimited.
    visit_quota: Option<u64>,
    budget_left: Option<u64>,
    tokens: Vec<Option<TokenState>>,
    rng: RngStream,
    /// Engine handle for the pending padding timer; owned here so drivers in
    /// both network and trace mode share the uniqueness bookkeeping.
    pub pending_timer: Option<EventHandle>,
    pub chain_overflows: u64,
}

impl MachineInstance {
    pub fn new(spec: Arc<CompiledMachine>, rng: RngStream) -> Self {
        let tokens = spec
            .states
            .iter()
            .map(|s| s.iat.as_ref().and_then(|d| d.token_state()))
            .collect();
        MachineInstance {
            state: spec.start,
            visit_sent: 0,
            visit_quota: None,
            budget_left: spec.budget,
            tokens,
            rng,
            pending_timer: None,
            chain_overflows: 0,
            spec,
        }
    }

    pub fn state_name(&self) -> &str {
        &self.spec.states[self.state].name
    }

    pub fn budget_left(&self) -> Option<u64> {
        self.budget_left
    }

    /// Feed one cell event. Timer commands are appended to `cmds`.
    pub fn on_trigger(&mut self, trigger: Trigger, cmds: &mut Vec<MachineCmd>) {
        self.process(trigger, cmds, 0);
    }

    /// The pending timer fired (driver has already cleared its handle).
    /// Returns true when a padding cell must be injected now.
    pub fn timer_fired(&mut self) -> bool {
        self.can_pad()
    }

    /// Bookkeeping after the driver injected the padding cell: count it
    /// against visit and budget, feed `PaddingSent`, then `LengthExceeded` if
    /// this cell met the visit quota. `LengthExceeded` is evaluated against
    /// whatever state `PaddingSent` handling left the machine in.
    pub fn after_padding_sent(&mut self, cmds: &mut Vec<MachineCmd>) {
        self.visit_sent += 1;
        if let Some(b) = &mut self.budget_left {
            *b = b.saturating_sub(1);
        }
        let quota_hit = self.visit_quota.is_some_and(|q| self.visit_sent >= q);
        self.process(Trigger::PaddingSent, cmds, 0);
        if quota_hit {
            self.process(Trigger::LengthExceeded, cmds, 0);
        }
    }

    fn can_pad(&self) -> bool {
        self.budget_left != Some(0) && self.visit_quota.is_none_or(|q| self.visit_sent < q)
    }

    fn process(&mut self, trigger: Trigger, cmds: &mut Vec<MachineCmd>, depth: u8) {
        if depth >= MAX_CHAIN {
            self.chain_overflows += 1;
            return;
        }
        let Some(target) = self.spec.states[self.state].transitions[trigger.index()] else {
            return; // undefined trigger: state and timer unchanged
        };
        cmds.push(MachineCmd::CancelTimer);
        // Self-transitions keep the visit counter and quota; they only
        // resample the inter-arrival timer. Cross entries start a new visit.
        if target != self.state {
            self.state = target;
            self.visit_sent = 0;
            self.visit_quota = self.sample_quota();
            if self.visit_quota == Some(0) {
                self.process(Trigger::LengthExceeded, cmds, depth + 1);
                return;
            }
        } else {
            self.state = target;
        }
        self.arm(cmds, depth);
    }

    fn arm(&mut self, cmds: &mut Vec<MachineCmd>, depth: u8) {
        if !self.can_pad() {
            return;
        }
        let Some(iat) = self.spec.states[self.state].iat.clone() else {
            return;
        };
        match iat.sample(&mut self.rng, self.tokens[self.state].as_mut()) {
            Sample::Finite(v) => cmds.push(MachineCmd::ScheduleTimer {
                delay_us: v.max(0.0).round() as u64,
            }),
            Sample::Infinite => self.process(Trigger::InfinitySampled, cmds, depth + 1),
        }
    }

    fn sample_quota(&mut self) -> Option<u64> {
        let state = &self.spec.states[self.state];
        let sampled = match state.length.clone() {
            Some(dist) => match dist.sample(&mut self.rng, None) {
                Sample::Finite(v) => Some(v.max(0.0).round() as u64),
                // An infinite length sample means no per-visit limit.
                Sample::Infinite => None,
            },
            None => None,
        };
        match (sampled, state.length_cap) {
            (Some(s), Some(cap)) => Some(s.min(cap)),
            (Some(s), None) => Some(s),
            (None, cap) => cap,
        }
    }
}
