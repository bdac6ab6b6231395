use serde::{Deserialize, Serialize};

use super::subframe::symbols_to_duration;
use crate::error::{Error, Result};
use crate::sim_core::{SimDuration, SimTime};

/// Single idle observation interval required before a DRS-only burst.
pub const DRS_IDLE_INTERVAL: SimDuration = SimDuration::from_us(25);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrsConfig {
    pub dmtc_period_ms: u64,
    pub dmtc_offset_ms: u64,
    pub dmtc_window_ms: u64,
    pub drs_symbols: u32,
}

impl Default for DrsConfig {
    fn default() -> Self {
        Self {
            dmtc_period_ms: 40,
            dmtc_offset_ms: 0,
            dmtc_window_ms: 6,
            drs_symbols: 12,
        }
    }
}

impl DrsConfig {
    pub fn validate(&self) -> Result<()> {
        if ![40, 80, 160].contains(&self.dmtc_period_ms) {
            return Err(Error::Config(format!(
                "dmtc_period_ms must be 40, 80 or 160, got {}",
                self.dmtc_period_ms
            )));
        }
        if self.dmtc_window_ms != 6 {
            return Err(Error::Config("dmtc_window_ms is fixed at 6".into()));
        }
        if self.dmtc_offset_ms >= self.dmtc_period_ms {
            return Err(Error::Config("dmtc_offset_ms must be below the period".into()));
        }
        if self.drs_symbols == 0 || self.drs_symbols > 14 {
            return Err(Error::Config("drs_symbols must be in 1..=14".into()));
        }
        Ok(())
    }

    pub fn period(&self) -> SimDuration {
        SimDuration::from_ms(self.dmtc_period_ms)
    }

    pub fn window(&self) -> SimDuration {
        SimDuration::from_ms(self.dmtc_window_ms)
    }

    pub fn drs_airtime(&self) -> SimDuration {
        symbols_to_duration(self.drs_symbols)
    }

    /// Occasion index and bounds of the DMTC window containing `now`.
    pub fn window_at(&self, now: SimTime) -> Option<(u64, SimTime, SimTime)> {
        let offset = SimDuration::from_ms(self.dmtc_offset_ms);
        let rel = now.checked_sub(offset)?;
        let period = self.period().as_ns();
        let k = rel.as_ns() / period;
        let start = SimTime::from_ns(k * period) + offset;
        let end = start + self.window();
        (now < end).then_some((k, start, end))
    }

    /// First window start at or after `t`.
    pub fn next_window_start(&self, t: SimTime) -> SimTime {
        let offset = SimDuration::from_ms(self.dmtc_offset_ms);
        match t.checked_sub(offset) {
            None => SimTime::ZERO + offset,
            Some(rel) => rel.ceil_to(self.period()) + offset,
        }
    }
}

/// True iff `now` is inside a DMTC window and the channel has been idle for
/// at least 25 us immediately before it.
pub fn drs_permitted(now: SimTime, cfg: &DrsConfig, idle_since: SimTime) -> bool {
    cfg.window_at(now).is_some() && idle_since <= now && now - idle_since >= DRS_IDLE_INTERVAL
}

/// Enforces at most one DRS per DMTC occasion.
#[derive(Debug, Clone)]
pub struct DrsGate {
    cfg: DrsConfig,
    last_occasion: Option<u64>,
}

impl DrsGate {
    pub fn new(cfg: DrsConfig) -> Self {
        Self {
            cfg,
            last_occasion: None,
        }
    }

    pub fn config(&self) -> &DrsConfig {
        &self.cfg
    }

    pub fn sent_in_current(&self, now: SimTime) -> bool {
        match (self.cfg.window_at(now), self.last_occasion) {
            (Some((k, _, _)), Some(last)) => k == last,
            _ => false,
        }
    }

    /// Records a DRS sent at `now` if it is permitted; returns whether it was.
    pub fn try_send(&mut self, now: SimTime, idle_since: SimTime) -> bool {
        if self.sent_in_current(now) || !drs_permitted(now, &self.cfg, idle_since) {
            return false;
        }
        self.last_occasion = self.cfg.window_at(now).map(|(k, _, _)| k);
        true
    }

    /// Marks the current occasion as served by a data burst carrying DRS.
    pub fn mark_served(&mut self, now: SimTime) {
        if let Some((k, _, _)) = self.cfg.window_at(now) {
            self.last_occasion = Some(k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> DrsConfig {
        DrsConfig {
            dmtc_offset_ms: 10,
            ..DrsConfig::default()
        }
    }

    #[test]
    fn permitted_inside_window_after_25us_idle() {
        let now = SimTime::from_ms(52);
        assert!(drs_permitted(now, &cfg(), SimTime::from_us(51_975)));
    }

    #[test]
    fn short_idle_rejected() {
        let now = SimTime::from_ms(52);
        assert!(!drs_permitted(now, &cfg(), SimTime::from_us(51_980)));
    }

    #[test]
    fn outside_window_rejected() {
        let now = SimTime::from_ms(30);
        assert!(!drs_permitted(now, &cfg(), SimTime::from_ms(29)));
        // before the first offset
        assert!(!drs_permitted(SimTime::from_ms(5), &cfg(), SimTime::ZERO));
        // window end is exclusive
        assert!(!drs_permitted(SimTime::from_ms(56), &cfg(), SimTime::from_ms(50)));
    }

    #[test]
    fn window_arithmetic() {
        let c = cfg();
        assert_eq!(c.window_at(SimTime::from_ms(91)), Some((2, SimTime::from_ms(90), SimTime::from_ms(96))));
        assert_eq!(c.next_window_start(SimTime::from_ms(11)), SimTime::from_ms(50));
        assert_eq!(c.next_window_start(SimTime::from_ms(50)), SimTime::from_ms(50));
        assert_eq!(c.next_window_start(SimTime::ZERO), SimTime::from_ms(10));
        assert_eq!(c.drs_airtime(), SimDuration::from_ns(857_142));
    }

    #[test]
    fn one_drs_per_occasion() {
        let mut g = DrsGate::new(cfg());
        assert!(g.try_send(SimTime::from_ms(51), SimTime::from_ms(50)));
        assert!(!g.try_send(SimTime::from_ms(53), SimTime::from_ms(52)));
        assert!(g.try_send(SimTime::from_ms(91), SimTime::from_ms(90)));
    }

    #[test]
    fn config_validation() {
        assert!(DrsConfig::default().validate().is_ok());
        for bad in [
            DrsConfig { dmtc_period_ms: 20, ..DrsConfig::default() },
            DrsConfig { dmtc_window_ms: 5, ..DrsConfig::default() },
            DrsConfig { dmtc_offset_ms: 40, ..DrsConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
