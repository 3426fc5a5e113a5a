//! Defense factories: turn a named defense configuration into the machines
//! (or BuFlo slotting) installed on every circuit.
//!
//! `burst_extend` and `adaptive_gap` are parameterized families, not
//! reimplementations of any published machine; their padding intensity is a
//! scenario knob.

use crate::engine::{DistSpec, HistBin};
use crate::error::{Error, Result};
use crate::padding::buflo::BufloConfig;
use crate::padding::machine::{EndpointSide, MachineSpec, StateSpec, Trigger};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

fn default_gap_us() -> u64 {
    2_000
}

fn default_spacing_us() -> u64 {
    200
}

fn default_middle_only() -> Vec<EndpointSide> {
    vec![EndpointSide::Middle]
}

fn default_both_endpoints() -> Vec<EndpointSide> {
    vec![EndpointSide::Client, EndpointSide::Middle]
}

fn default_true() -> bool {
    true
}

/// Defense selection, as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum DefenseSpec {
    /// Control: no machines attached, runs byte-identical to a build without
    /// the padding layer.
    None,
    /// After a burst of non-padding cells ends (no cell for `gap_us`), append
    /// one padding cell plus a geometric(p_extend) tail capped at `max_extra`,
    /// spaced `spacing_us` apart.
    BurstExtend {
        p_extend: f64,
        max_extra: u64,
        #[serde(default = "default_gap_us")]
        gap_us: u64,
        #[serde(default = "default_spacing_us")]
        spacing_us: u64,
        #[serde(default = "default_middle_only")]
        endpoints: Vec<EndpointSide>,
    },
    /// Pad inter-cell gaps sampled from a token histogram with an infinity
    /// bin; every cell event resamples the gap, infinity parks the machine
    /// until the next non-padding cell.
    AdaptiveGap {
        bins: Vec<HistBin>,
        #[serde(default)]
        infinity_tokens: u32,
        #[serde(default = "default_true")]
        token_removal: bool,
        #[serde(default)]
        budget_cells: Option<u64>,
        #[serde(default = "default_both_endpoints")]
        endpoints: Vec<EndpointSide>,
    },
    /// Constant-rate slotting (delay + pad reference defense).
    Buflo(BufloConfig),
    /// Raw machine definitions straight from the scenario file.
    Custom { machines: Vec<MachineSpec> },
}

/// What gets installed on each circuit.
#[derive(Debug, Clone, Default)]
pub struct CompiledDefense {
    pub machines: Vec<MachineSpec>,
    pub buflo: Option<BufloConfig>,
}

impl DefenseSpec {
    pub fn display_name(&self) -> &'static str {
        match self {
            DefenseSpec::None => "none",
            DefenseSpec::BurstExtend { .. } => "burst_extend",
            DefenseSpec::AdaptiveGap { .. } => "adaptive_gap",
            DefenseSpec::Buflo(_) => "buflo",
            DefenseSpec::Custom { .. } => "custom",
        }
    }

    /// Validate parameters and produce the per-circuit attachment plan.
    pub fn compile(&self, field: &str) -> Result<CompiledDefense> {
        match self {
            DefenseSpec::None => Ok(CompiledDefense::default()),
            DefenseSpec::BurstExtend {
                p_extend,
                max_extra,
                gap_us,
                spacing_us,
                endpoints,
            } => {
                if !(*p_extend > 0.0 && *p_extend <= 1.0) {
                    return Err(Error::config(
                        format!("{field}.p_extend"),
                        format!("must be in (0, 1], got {p_extend}"),
                    ));
                }
                if *gap_us == 0 {
                    return Err(Error::config(format!("{field}.gap_us"), "must be positive"));
                }
                require_endpoints(endpoints, field)?;
                let machines = endpoints
                    .iter()
                    .map(|&ep| burst_extend_machine(ep, *p_extend, *max_extra, *gap_us, *spacing_us))
                    .collect();
                Ok(CompiledDefense { machines, buflo: None })
            }
            DefenseSpec::AdaptiveGap {
                bins,
                infinity_tokens,
                token_removal,
                budget_cells,
                endpoints,
            } => {
                let hist = DistSpec::Histogram {
                    bins: bins.clone(),
                    infinity_tokens: *infinity_tokens,
                    token_removal: *token_removal,
                };
                hist.validate(&format!("{field}.bins"))?;
                require_endpoints(endpoints, field)?;
                let machines = endpoints
                    .iter()
                    .map(|&ep| adaptive_gap_machine(ep, hist.clone(), *budget_cells))
                    .collect();
                Ok(CompiledDefense { machines, buflo: None })
            }
            DefenseSpec::Buflo(cfg) => {
                cfg.validate(field)?;
                Ok(CompiledDefense {
                    machines: Vec::new(),
                    buflo: Some(cfg.clone()),
                })
            }
            DefenseSpec::Custom { machines } => {
                if machines.is_empty() {
                    return Err(Error::config(
                        format!("{field}.machines"),
                        "custom defense needs at least one machine",
                    ));
                }
                for (i, m) in machines.iter().enumerate() {
                    m.compile(&format!("{field}.machines[{i}]"))?;
                }
                Ok(CompiledDefense {
                    machines: machines.clone(),
                    buflo: None,
                })
            }
        }
    }
}

fn require_endpoints(endpoints: &[EndpointSide], field: &str) -> Result<()> {
    if endpoints.is_empty() {
        return Err(Error::config(
            format!("{field}.endpoints"),
            "at least one endpoint required",
        ));
    }
    Ok(())
}

fn uniform(v: u64) -> DistSpec {
    DistSpec::Uniform {
        low: v as f64,
        high: v as f64,
    }
}

/// idle -> watch on traffic; the watch timer doubles as the burst-end
/// detector (every further cell pushes it back) and its expiry is the first
/// extension cell; the extend state then emits the geometric tail.
fn burst_extend_machine(
    endpoint: EndpointSide,
    p_extend: f64,
    max_extra: u64,
    gap_us: u64,
    spacing_us: u64,
) -> MachineSpec {
    let mut idle = StateSpec::default();
    idle.transitions.insert(Trigger::NonPaddingSent, "watch".into());

    let mut watch = StateSpec {
        iat: Some(uniform(gap_us)),
        ..Default::default()
    };
    watch.transitions.insert(Trigger::NonPaddingSent, "watch".into());
    watch.transitions.insert(Trigger::PaddingSent, "extend".into());

    let mut extend = StateSpec {
        iat: Some(uniform(spacing_us)),
        length: Some(DistSpec::Geometric { p: p_extend }),
        length_cap: Some(max_extra),
        ..Default::default()
    };
    extend.transitions.insert(Trigger::PaddingSent, "extend".into());
    extend.transitions.insert(Trigger::LengthExceeded, "idle".into());
    extend.transitions.insert(Trigger::NonPaddingSent, "watch".into());

    let mut states = BTreeMap::new();
    states.insert("idle".to_string(), idle);
    states.insert("watch".to_string(), watch);
    states.insert("extend".to_string(), extend);

    MachineSpec {
        name: format!("burst_extend_{}", endpoint.label()),
        endpoint,
        start_state: "idle".into(),
        budget_cells: None,
        states,
    }
}

/// idle -> gap on any non-padding cell; in gap, every cell event resamples
/// the histogram, expiry injects padding, infinity parks back to idle.
fn adaptive_gap_machine(
    endpoint: EndpointSide,
    hist: DistSpec,
    budget_cells: Option<u64>,
) -> MachineSpec {
    let mut idle = StateSpec::default();
    idle.transitions.insert(Trigger::NonPaddingSent, "gap".into());
    idle.transitions.insert(Trigger::NonPaddingReceived, "gap".into());

    let mut gap = StateSpec {
        iat: Some(hist),
        ..Default::default()
    };
    gap.transitions.insert(Trigger::NonPaddingSent, "gap".into());
    gap.transitions.insert(Trigger::NonPaddingReceived, "gap".into());
    gap.transitions.insert(Trigger::PaddingSent, "gap".into());
    gap.transitions.insert(Trigger::InfinitySampled, "idle".into());

    let mut states = BTreeMap::new();
    states.insert("idle".to_string(), idle);
    states.insert("gap".to_string(), gap);

    MachineSpec {
        name: format!("adaptive_gap_{}", endpoint.label()),
        endpoint,
        start_state: "idle".into(),
        budget_cells,
        states,
    }
}
