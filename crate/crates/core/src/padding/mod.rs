//! The pluggable defense layer: padding machine runtime, BuFlo slotting, and
//! the defense factories.

pub mod buflo;
pub mod defense;
pub mod machine;

pub use buflo::{BufloConfig, BufloDriver};
pub use defense::{CompiledDefense, DefenseSpec};
pub use machine::{
    CompiledMachine, EndpointSide, MachineCmd, MachineInstance, MachineSpec, StateSpec, Trigger,
};
