//! Deterministic discrete-event kernel: virtual clock, event queue and
//! seeded random substreams.

mod queue;
mod rng;
mod time;

pub use queue::{EntityId, Event, EventId, EventQueue};
pub use rng::{derive_seed, derive_u64, uniform_int, RngStream};
pub use time::{SimDuration, SimTime};
