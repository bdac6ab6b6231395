//! LAA downlink channel access.
//!
//! Category-4 listen-before-talk with priority-class parameters, the
//! energy-detection threshold rule, HARQ-driven contention window adaptation,
//! maximum channel occupancy, DRS gating, partial subframes, the Japanese
//! 34 us sensing gap and the two multicarrier access options.

mod drs;
mod lbt;
mod multicarrier;
mod subframe;

pub use drs::{drs_permitted, DrsConfig, DrsGate, DRS_IDLE_INTERVAL};
pub use lbt::{cws_update, HarqFeedback, HarqValue, LbtAction, LbtEngine, LbtState};
pub use multicarrier::{multicarrier_lbt, CarrierView, MulticarrierMode, SINGLE_INTERVAL};
pub use subframe::{
    partial_subframe_plan, symbols_to_duration, Segment, SubframePlan, ENDING_SYMBOLS, SLOT,
    SUBFRAME, SYMBOLS_PER_SUBFRAME,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim_core::SimDuration;

/// ECCA slot, identical to the Wi-Fi slot.
pub const ECCA_SLOT: SimDuration = SimDuration::from_us(9);
/// Fixed leading part of every defer period.
pub const DEFER_PREFIX: SimDuration = SimDuration::from_us(16);

pub const JAPAN_GAP: SimDuration = SimDuration::from_us(34);
pub const JAPAN_MAX_CONTINUOUS: SimDuration = SimDuration::from_ms(4);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityClassParams {
    pub class_id: u8,
    /// Allowed contention window sizes, smallest first.
    pub cws_set: Vec<u32>,
    pub mcot_shared_us: u64,
    pub mcot_exclusive_us: u64,
    pub defer_slots: u32,
}

impl PriorityClassParams {
    pub fn class3() -> Self {
        Self {
            class_id: 3,
            cws_set: vec![15, 31, 63],
            mcot_shared_us: 8_000,
            mcot_exclusive_us: 10_000,
            defer_slots: 3,
        }
    }

    pub fn class4() -> Self {
        Self {
            class_id: 4,
            cws_set: vec![15, 31, 63, 127, 255, 511, 1023],
            mcot_shared_us: 8_000,
            mcot_exclusive_us: 10_000,
            defer_slots: 7,
        }
    }

    /// Built-in parameters; classes 1 and 2 must come from configuration.
    pub fn standard(class_id: u8) -> Option<Self> {
        match class_id {
            3 => Some(Self::class3()),
            4 => Some(Self::class4()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.class_id) {
            return Err(Error::Config(format!("priority class {} not in 1..=4", self.class_id)));
        }
        if self.cws_set.is_empty() || self.cws_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("cws_set must be non-empty and strictly increasing".into()));
        }
        if self.mcot_shared_us > self.mcot_exclusive_us {
            return Err(Error::Config("mcot_shared_us must not exceed mcot_exclusive_us".into()));
        }
        if self.mcot_shared_us == 0 {
            return Err(Error::Config("mcot must be positive".into()));
        }
        if self.class_id == 3 && self.cws_set != [15, 31, 63] {
            return Err(Error::Config("priority class 3 uses cws_set [15, 31, 63]".into()));
        }
        if self.class_id >= 3 && (self.mcot_shared_us, self.mcot_exclusive_us) != (8_000, 10_000) {
            return Err(Error::Config(
                "priority classes 3 and 4 use an 8 ms shared / 10 ms exclusive MCOT".into(),
            ));
        }
        Ok(())
    }

    pub fn cw_min(&self) -> u32 {
        self.cws_set[0]
    }

    pub fn cw_max(&self) -> u32 {
        *self.cws_set.last().expect("validated non-empty")
    }

    /// Defer period: 16 us plus `defer_slots` ECCA slots.
    pub fn defer_duration(&self) -> SimDuration {
        DEFER_PREFIX + ECCA_SLOT.mul(self.defer_slots as u64)
    }
}

/// Maximum channel occupancy for a class; the longer value applies only
/// when no other technology can be present on the carrier.
pub fn mcot_us(class: &PriorityClassParams, exclusive_band: bool) -> u64 {
    if exclusive_band {
        class.mcot_exclusive_us
    } else {
        class.mcot_shared_us
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdThresholdParams {
    /// Reference power P_H.
    pub p_h_dbm: f64,
    /// Configured maximum transmit power on the carrier.
    pub p_tx_dbm: f64,
    pub bw_mhz: f64,
    /// True when other technologies may share the carrier.
    pub shared_band: bool,
    /// Threshold used when `shared_band` is false; defaults to T_max.
    #[serde(default)]
    pub exclusive_threshold_dbm: Option<f64>,
}

impl EdThresholdParams {
    pub fn new(p_tx_dbm: f64, bw_mhz: f64) -> Self {
        Self {
            p_h_dbm: 23.0,
            p_tx_dbm,
            bw_mhz,
            shared_band: true,
            exclusive_threshold_dbm: None,
        }
    }
}

/// `TH = max(-72 dBm (20 MHz), min(T_max, T_max - 10 + (P_H - P_TX)))`
/// with `T_max = -75 dBm/MHz + 10 log10(BW)`. The -72 dBm floor is scaled
/// by `10 log10(BW / 20)` for other bandwidths.
pub fn ed_threshold_dbm(p: &EdThresholdParams) -> Result<f64> {
    if !(p.bw_mhz > 0.0) {
        return Err(Error::InvalidInput(format!("bw_mhz must be > 0, got {}", p.bw_mhz)));
    }
    let t_max = -75.0 + 10.0 * p.bw_mhz.log10();
    if !p.shared_band {
        return Ok(p.exclusive_threshold_dbm.unwrap_or(t_max));
    }
    let floor = -72.0 + 10.0 * (p.bw_mhz / 20.0).log10();
    Ok(floor.max(t_max.min(t_max - 10.0 + (p.p_h_dbm - p.p_tx_dbm))))
}

/// Extra idle-sensing time owed after `continuous_tx` of transmission.
///
/// Returns 34 us each time the continuous airtime reaches a multiple of
/// 4 ms while the burst still has content to send, zero otherwise.
pub fn japan_gap_check(continuous_tx: SimDuration, burst_continues: bool) -> SimDuration {
    let period = JAPAN_MAX_CONTINUOUS.as_ns();
    if burst_continues && !continuous_tx.is_zero() && continuous_tx.as_ns() % period == 0 {
        JAPAN_GAP
    } else {
        SimDuration::ZERO
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ed_threshold_reference_points() {
        let th = |p_tx| ed_threshold_dbm(&EdThresholdParams::new(p_tx, 20.0)).unwrap();
        // T_max(20 MHz) = -61.99; at P_TX = P_H the min term is -71.99
        assert_abs_diff_eq!(th(23.0), -72.0, epsilon = 0.05);
        assert_abs_diff_eq!(th(23.0), -75.0 + 10.0 * 20f64.log10() - 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(th(18.0), -66.99, epsilon = 0.05);
        assert_abs_diff_eq!(th(33.0), -72.0, epsilon = 1e-12);
    }

    #[test]
    fn ed_threshold_never_above_t_max() {
        for p_tx in [-10.0, 0.0, 5.0, 10.0] {
            let th = ed_threshold_dbm(&EdThresholdParams::new(p_tx, 20.0)).unwrap();
            assert_abs_diff_eq!(th, -75.0 + 10.0 * 20f64.log10(), epsilon = 1e-12);
        }
    }

    #[test]
    fn ed_threshold_scales_floor_with_bandwidth() {
        let th = ed_threshold_dbm(&EdThresholdParams::new(40.0, 40.0)).unwrap();
        assert_abs_diff_eq!(th, -72.0 + 10.0 * 2f64.log10(), epsilon = 1e-12);
    }

    #[test]
    fn ed_threshold_exclusive_band() {
        let mut p = EdThresholdParams::new(23.0, 20.0);
        p.shared_band = false;
        assert_abs_diff_eq!(ed_threshold_dbm(&p).unwrap(), -61.9897, epsilon = 1e-4);
        p.exclusive_threshold_dbm = Some(-65.0);
        assert_eq!(ed_threshold_dbm(&p).unwrap(), -65.0);
        p.bw_mhz = 0.0;
        assert!(ed_threshold_dbm(&p).is_err());
    }

    #[test]
    fn mcot_by_class_and_band() {
        let c3 = PriorityClassParams::class3();
        let c4 = PriorityClassParams::class4();
        assert_eq!(mcot_us(&c3, false), 8_000);
        assert_eq!(mcot_us(&c3, true), 10_000);
        assert_eq!(mcot_us(&c4, false), 8_000);
        assert_eq!(mcot_us(&c4, true), 10_000);
    }

    #[test]
    fn class_validation() {
        assert!(PriorityClassParams::class3().validate().is_ok());
        assert!(PriorityClassParams::class4().validate().is_ok());
        assert!(PriorityClassParams::standard(1).is_none());
        let mut bad = PriorityClassParams::class3();
        bad.cws_set = vec![15, 63, 31];
        assert!(bad.validate().is_err());
        let mut bad = PriorityClassParams::class3();
        bad.mcot_shared_us = 9_000;
        assert!(bad.validate().is_err());
        let custom = PriorityClassParams {
            class_id: 1,
            cws_set: vec![3, 7],
            mcot_shared_us: 2_000,
            mcot_exclusive_us: 2_000,
            defer_slots: 1,
        };
        assert!(custom.validate().is_ok());
        assert_eq!(PriorityClassParams::class3().defer_duration(), SimDuration::from_us(43));
    }

    #[test]
    fn japan_gap_rule() {
        assert_eq!(japan_gap_check(SimDuration::from_us(4_000), true), JAPAN_GAP);
        assert_eq!(japan_gap_check(SimDuration::from_us(8_000), true), JAPAN_GAP);
        assert_eq!(japan_gap_check(SimDuration::from_us(3_999), true), SimDuration::ZERO);
        assert_eq!(japan_gap_check(SimDuration::from_us(4_000), false), SimDuration::ZERO);
        assert_eq!(japan_gap_check(SimDuration::ZERO, true), SimDuration::ZERO);
        // a burst of at most 4 ms never has content left at the 4 ms mark
        let burst = SimDuration::from_us(4_000);
        let gaps = (1..=burst.as_ns() / 1_000)
            .map(|us| SimDuration::from_us(us))
            .filter(|&elapsed| !japan_gap_check(elapsed, elapsed < burst).is_zero())
            .count();
        assert_eq!(gaps, 0);
    }
}
