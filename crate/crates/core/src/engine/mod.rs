//! Deterministic discrete-event core: virtual clock, event queue, and seeded
//! per-entity random streams.

mod dist;
mod queue;
mod rng;

pub use dist::{DistSpec, HistBin, Sample, TokenState};
pub use queue::{Event, EventHandle, EventQueue};
pub use rng::RngStream;
