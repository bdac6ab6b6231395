use serde::{Deserialize, Serialize};

use super::{PriorityClassParams, DEFER_PREFIX, ECCA_SLOT};
use crate::error::{Error, Result};
use crate::sim_core::{RngStream, SimDuration};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbtState {
    Idle,
    Deferring,
    Backoff,
    /// Counter reached zero; the carrier may transmit (or self-defer).
    Ready,
    TxOngoing,
    GapSensing,
}

impl LbtState {
    fn name(self) -> &'static str {
        match self {
            LbtState::Idle => "idle",
            LbtState::Deferring => "deferring",
            LbtState::Backoff => "backoff",
            LbtState::Ready => "ready",
            LbtState::TxOngoing => "tx_ongoing",
            LbtState::GapSensing => "gap_sensing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbtAction {
    KeepSensing,
    Decrement,
    Freeze,
    TransmitNow,
}

/// Per-carrier category-4 LBT state.
///
/// The defer period is counted in sensing intervals: one 16 us prefix
/// followed by `defer_slots` ECCA slots. [`LbtEngine::next_interval`] tells
/// the driver how long the next interval lasts.
#[derive(Debug, Clone)]
pub struct LbtEngine {
    class: PriorityClassParams,
    state: LbtState,
    backoff_counter: u32,
    cws: u32,
    defer_remaining: u32,
    ecca_slot: SimDuration,
    mcot_spent: SimDuration,
    carrier_id: u32,
}

impl LbtEngine {
    pub fn new(class: PriorityClassParams, carrier_id: u32) -> Self {
        let cws = class.cw_min();
        Self {
            class,
            state: LbtState::Idle,
            backoff_counter: 0,
            cws,
            defer_remaining: 0,
            ecca_slot: ECCA_SLOT,
            mcot_spent: SimDuration::ZERO,
            carrier_id,
        }
    }

    /// Uses a longer ECCA slot; anything below 9 us is rejected.
    pub fn with_ecca_slot(mut self, slot: SimDuration) -> Result<Self> {
        if slot < ECCA_SLOT {
            return Err(Error::InvalidInput("ECCA slot must be at least 9 us".into()));
        }
        self.ecca_slot = slot;
        Ok(self)
    }

    pub fn state(&self) -> LbtState {
        self.state
    }

    pub fn cws(&self) -> u32 {
        self.cws
    }

    pub fn backoff_counter(&self) -> u32 {
        self.backoff_counter
    }

    pub fn class(&self) -> &PriorityClassParams {
        &self.class
    }

    pub fn carrier_id(&self) -> u32 {
        self.carrier_id
    }

    pub fn mcot_spent(&self) -> SimDuration {
        self.mcot_spent
    }

    pub fn ecca_slot(&self) -> SimDuration {
        self.ecca_slot
    }

    /// Length of the sensing interval that the next `advance` call covers.
    pub fn next_interval(&self) -> SimDuration {
        if self.state == LbtState::Deferring && self.defer_remaining == self.class.defer_slots + 1 {
            DEFER_PREFIX
        } else {
            self.ecca_slot
        }
    }

    fn full_defer(&mut self) {
        self.defer_remaining = self.class.defer_slots + 1;
    }

    /// Starts a new access attempt with a counter drawn from `[0, cws]`.
    pub fn begin_access(&mut self, rng: &mut RngStream) -> Result<u32> {
        let n = rng.uniform_u32(self.cws);
        self.begin_access_with_counter(n)?;
        Ok(n)
    }

    /// Starts an access attempt with an externally chosen counter.
    pub fn begin_access_with_counter(&mut self, counter: u32) -> Result<()> {
        if self.state != LbtState::Idle {
            return Err(self.invalid());
        }
        if counter > self.cws {
            return Err(Error::InvalidInput(format!(
                "backoff counter {counter} exceeds CWS {}",
                self.cws
            )));
        }
        self.backoff_counter = counter;
        self.state = LbtState::Deferring;
        self.full_defer();
        Ok(())
    }

    /// Feeds the outcome of the sensing interval that just elapsed.
    pub fn advance(&mut self, channel_idle: bool) -> Result<LbtAction> {
        match self.state {
            LbtState::Deferring => {
                if !channel_idle {
                    self.full_defer();
                    return Ok(LbtAction::Freeze);
                }
                self.defer_remaining -= 1;
                if self.defer_remaining > 0 {
                    return Ok(LbtAction::KeepSensing);
                }
                if self.backoff_counter == 0 {
                    self.state = LbtState::Ready;
                    Ok(LbtAction::TransmitNow)
                } else {
                    self.state = LbtState::Backoff;
                    Ok(LbtAction::KeepSensing)
                }
            }
            LbtState::Backoff => {
                if !channel_idle {
                    self.state = LbtState::Deferring;
                    self.full_defer();
                    return Ok(LbtAction::Freeze);
                }
                self.backoff_counter -= 1;
                if self.backoff_counter == 0 {
                    self.state = LbtState::Ready;
                    Ok(LbtAction::TransmitNow)
                } else {
                    Ok(LbtAction::Decrement)
                }
            }
            LbtState::Ready => {
                if channel_idle {
                    Ok(LbtAction::TransmitNow)
                } else {
                    self.state = LbtState::Deferring;
                    self.full_defer();
                    Ok(LbtAction::Freeze)
                }
            }
            _ => Err(self.invalid()),
        }
    }

    /// Marks an interrupted interval as busy. Same as `advance(false)` but
    /// also accepted while idle, where it is a no-op.
    pub fn sense_busy(&mut self) -> Result<LbtAction> {
        if self.state == LbtState::Idle {
            return Ok(LbtAction::KeepSensing);
        }
        self.advance(false)
    }

    pub fn start_transmission(&mut self) -> Result<()> {
        if self.state != LbtState::Ready {
            return Err(self.invalid());
        }
        self.state = LbtState::TxOngoing;
        self.mcot_spent = SimDuration::ZERO;
        Ok(())
    }

    pub fn record_airtime(&mut self, d: SimDuration) {
        self.mcot_spent += d;
    }

    pub fn enter_gap(&mut self) -> Result<()> {
        if self.state != LbtState::TxOngoing {
            return Err(self.invalid());
        }
        self.state = LbtState::GapSensing;
        Ok(())
    }

    pub fn resume_after_gap(&mut self) -> Result<()> {
        if self.state != LbtState::GapSensing {
            return Err(self.invalid());
        }
        self.state = LbtState::TxOngoing;
        Ok(())
    }

    pub fn end_transmission(&mut self) -> Result<()> {
        match self.state {
            LbtState::TxOngoing | LbtState::GapSensing => {
                self.state = LbtState::Idle;
                Ok(())
            }
            _ => Err(self.invalid()),
        }
    }

    /// Abandons an access attempt that has not yet transmitted.
    pub fn abandon(&mut self) {
        if matches!(
            self.state,
            LbtState::Deferring | LbtState::Backoff | LbtState::Ready
        ) {
            self.state = LbtState::Idle;
        }
    }

    fn invalid(&self) -> Error {
        Error::InvalidState {
            machine: "lbt",
            state: self.state.name(),
        }
    }

    fn set_cws(&mut self, cws: u32) {
        debug_assert!(self.class.cws_set.contains(&cws));
        self.cws = cws;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarqValue {
    Ack,
    Nack,
    Dtx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarqFeedback {
    pub burst_id: u64,
    pub subframe_index: u32,
    pub value: HarqValue,
    pub scheduled_on_pcell: bool,
    pub actually_scheduled: bool,
}

impl HarqFeedback {
    /// `Some(true)` for NACK-equivalent, `Some(false)` for ACK, `None` if
    /// the entry is exempt from the count.
    fn counts_as_nack(&self) -> Option<bool> {
        match self.value {
            HarqValue::Ack => Some(false),
            HarqValue::Nack => Some(true),
            HarqValue::Dtx if !self.actually_scheduled || self.scheduled_on_pcell => None,
            HarqValue::Dtx => Some(true),
        }
    }
}

/// Adapts the contention window from the reference subframe's HARQ-ACK.
///
/// At least 80 % NACK moves the CWS one step up the class set (held at the
/// maximum); anything less resets it to the minimum. DTX counts as NACK
/// unless the UE was not actually scheduled or was scheduled through the
/// licensed PCell, in which case the entry is ignored. An empty effective
/// set leaves the CWS unchanged.
pub fn cws_update(feedbacks: &[HarqFeedback], engine: &mut LbtEngine) -> u32 {
    let (mut total, mut nacks) = (0u32, 0u32);
    for fb in feedbacks {
        if let Some(is_nack) = fb.counts_as_nack() {
            total += 1;
            nacks += is_nack as u32;
        }
    }
    if total == 0 {
        return engine.cws;
    }
    let set = &engine.class.cws_set;
    let new = if 5 * nacks >= 4 * total {
        let idx = set.iter().position(|&c| c == engine.cws).unwrap_or(0);
        set[(idx + 1).min(set.len() - 1)]
    } else {
        set[0]
    };
    engine.set_cws(new);
    new
}
