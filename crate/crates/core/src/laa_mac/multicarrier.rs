use std::collections::BTreeSet;

use super::lbt::{LbtEngine, LbtState};
use crate::error::{Error, Result};
use crate::sim_core::{SimDuration, SimTime};

/// Single-interval check used on non-designated carriers.
pub const SINGLE_INTERVAL: SimDuration = SimDuration::from_us(25);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MulticarrierMode {
    /// One designated carrier runs random backoff; the others only need a
    /// single idle interval once it completes.
    DesignatedCarrier { designated: Option<u32> },
    /// Every carrier runs its own backoff; finished carriers self-defer to
    /// `alignment` and re-check one slot before transmitting.
    IndependentWithSelfDeferral { alignment: SimTime },
}

#[derive(Debug, Clone, Copy)]
pub struct CarrierView<'a> {
    pub engine: &'a LbtEngine,
    /// How long the carrier has been sensed idle as of the decision instant.
    pub idle_for: SimDuration,
}

/// Carriers cleared to transmit at `now`.
pub fn multicarrier_lbt(
    mode: MulticarrierMode,
    carriers: &[CarrierView<'_>],
    now: SimTime,
) -> Result<BTreeSet<u32>> {
    if carriers.is_empty() {
        return Err(Error::Empty("carrier list"));
    }
    let mut cleared = BTreeSet::new();
    match mode {
        MulticarrierMode::DesignatedCarrier { designated } => {
            let id = designated.ok_or(Error::NoDesignatedCarrier)?;
            let primary = carriers
                .iter()
                .find(|c| c.engine.carrier_id() == id)
                .ok_or(Error::NoDesignatedCarrier)?;
            if primary.engine.state() != LbtState::Ready {
                return Ok(cleared);
            }
            cleared.insert(id);
            for c in carriers {
                if c.engine.carrier_id() != id && c.idle_for >= SINGLE_INTERVAL {
                    cleared.insert(c.engine.carrier_id());
                }
            }
        }
        MulticarrierMode::IndependentWithSelfDeferral { alignment } => {
            if now < alignment {
                return Ok(cleared);
            }
            for c in carriers {
                if c.engine.state() == LbtState::Ready && c.idle_for >= c.engine.ecca_slot() {
                    cleared.insert(c.engine.carrier_id());
                }
            }
        }
    }
    Ok(cleared)
}
