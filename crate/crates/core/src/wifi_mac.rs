//! Simplified 802.11 DCF: energy-based CCA, DIFS, binary exponential
//! backoff and immediate ACKs. One access category, no RTS/CTS, no NAV.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::{BurstKind, Medium, NodeId, Reception, Technology, TxId};
use crate::sim_core::{RngStream, SimDuration, SimTime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DcfParams {
    pub slot_us: u64,
    pub sifs_us: u64,
    pub difs_us: u64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub ack_duration_us: u64,
    pub max_ppdu_us: u64,
    pub preamble_us: u64,
    pub retry_limit: u32,
    pub ed_threshold_dbm: f64,
    /// Preamble-detection sensitivity toward Wi-Fi signals; `None` leaves
    /// energy detection as the only CCA mechanism.
    pub preamble_detect_dbm: Option<f64>,
    pub ack_decode_threshold_db: f64,
    /// Rate fallback: a failed exchange lowers the SINR the next rate to the
    /// same receiver is picked from by this much.
    pub rate_step_down_db: f64,
    /// A successful exchange gives back this much, up to the plain SNR.
    pub rate_step_up_db: f64,
    /// Lowest rate the fallback goes down to (the most robust MCS).
    pub min_rate_mbps: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            slot_us: 9,
            sifs_us: 16,
            difs_us: 34,
            cw_min: 15,
            cw_max: 1023,
            ack_duration_us: 44,
            max_ppdu_us: 2_000,
            preamble_us: 40,
            retry_limit: 7,
            ed_threshold_dbm: -62.0,
            preamble_detect_dbm: None,
            ack_decode_threshold_db: 4.0,
            rate_step_down_db: 3.0,
            rate_step_up_db: 1.0,
            min_rate_mbps: 6.5,
        }
    }
}

fn is_cw_value(cw: u32) -> bool {
    (cw + 1).is_power_of_two()
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        if !is_cw_value(self.cw_min) || !is_cw_value(self.cw_max) || self.cw_min > self.cw_max {
            return Err(Error::Config(
                "cw_min and cw_max must be of the form 2^k - 1 with cw_min <= cw_max".into(),
            ));
        }
        if self.slot_us != 9 {
            return Err(Error::Config("Wi-Fi slot must match the 9 us ECCA slot".into()));
        }
        if self.difs_us < self.sifs_us || (self.difs_us - self.sifs_us) % self.slot_us != 0 {
            return Err(Error::Config("difs_us must be sifs_us plus whole slots".into()));
        }
        if self.max_ppdu_us <= self.preamble_us {
            return Err(Error::Config("max_ppdu_us must exceed preamble_us".into()));
        }
        if self.ack_duration_us == 0 || self.ack_duration_us >= 100 {
            return Err(Error::Config("ack_duration_us must be in 1..100".into()));
        }
        if self.retry_limit == 0 {
            return Err(Error::Config("retry_limit must be positive".into()));
        }
        if !(self.min_rate_mbps > 0.0) {
            return Err(Error::Config("min_rate_mbps must be > 0".into()));
        }
        if !(self.rate_step_down_db >= 0.0 && self.rate_step_up_db >= 0.0) {
            return Err(Error::Config("rate steps must be >= 0 dB".into()));
        }
        Ok(())
    }

    pub fn slot(&self) -> SimDuration {
        SimDuration::from_us(self.slot_us)
    }

    pub fn sifs(&self) -> SimDuration {
        SimDuration::from_us(self.sifs_us)
    }

    pub fn ack_duration(&self) -> SimDuration {
        SimDuration::from_us(self.ack_duration_us)
    }

    fn difs_slots(&self) -> u32 {
        ((self.difs_us - self.sifs_us) / self.slot_us) as u32
    }

    /// PPDU airtime for `bytes` at `rate_bps`, preamble included.
    pub fn ppdu_airtime(&self, bytes: u64, rate_bps: f64) -> SimDuration {
        let ns = (bytes as f64 * 8.0 / rate_bps * 1e9).ceil() as u64;
        SimDuration::from_us(self.preamble_us) + SimDuration::from_ns(ns)
    }

    /// Largest payload that fits a maximum-length PPDU at `rate_bps`.
    pub fn max_payload_bytes(&self, rate_bps: f64) -> u64 {
        let secs = (self.max_ppdu_us - self.preamble_us) as f64 * 1e-6;
        ((rate_bps * secs / 8.0).floor() as u64).max(1)
    }
}

/// ARF-style per-receiver rate fallback, expressed as a backoff in dB
/// applied to the SNR before the rate map.
#[derive(Debug, Clone, Default)]
pub struct RateFallback {
    backoff_db: BTreeMap<u32, f64>,
}

impl RateFallback {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn backoff_db(&self, dest: u32) -> f64 {
        self.backoff_db.get(&dest).copied().unwrap_or(0.0)
    }

    /// Updates the backoff after an exchange; it never exceeds
    /// `max_backoff_db`, the point where the rate floor is reached.
    pub fn record(&mut self, dest: u32, event: ExchangeEvent, params: &DcfParams, max_backoff_db: f64) {
        let b = self.backoff_db.entry(dest).or_insert(0.0);
        *b = match event {
            ExchangeEvent::Success => *b - params.rate_step_up_db,
            ExchangeEvent::Failure => *b + params.rate_step_down_db,
        }
        .min(max_backoff_db)
        .max(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeEvent {
    Success,
    Failure,
}

/// `failure -> min(2(cw + 1) - 1, cw_max)`, `success -> cw_min`.
pub fn cw_after(event: ExchangeEvent, cw: u32, params: &DcfParams) -> u32 {
    match event {
        ExchangeEvent::Success => params.cw_min,
        ExchangeEvent::Failure => (2 * (cw + 1) - 1).min(params.cw_max),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcfState {
    Idle,
    DifsWait,
    Backoff,
    Tx,
    AwaitAck,
}

impl DcfState {
    fn name(self) -> &'static str {
        match self {
            DcfState::Idle => "idle",
            DcfState::DifsWait => "difs_wait",
            DcfState::Backoff => "backoff",
            DcfState::Tx => "tx",
            DcfState::AwaitAck => "await_ack",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcfAction {
    Wait,
    Decrement,
    Freeze,
    TransmitNow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureOutcome {
    Retry,
    Drop,
}

/// Per-node DCF state. DIFS is sensed as one SIFS-long interval followed
/// by whole slots, so decrements stay on the slot grid after each
/// busy-to-idle transition.
#[derive(Debug, Clone)]
pub struct DcfEngine {
    params: DcfParams,
    state: DcfState,
    cw: u32,
    backoff_counter: u32,
    retry_count: u32,
    difs_remaining: u32,
}

impl DcfEngine {
    pub fn new(params: DcfParams) -> Self {
        let cw = params.cw_min;
        Self {
            params,
            state: DcfState::Idle,
            cw,
            backoff_counter: 0,
            retry_count: 0,
            difs_remaining: 0,
        }
    }

    pub fn params(&self) -> &DcfParams {
        &self.params
    }

    pub fn state(&self) -> DcfState {
        self.state
    }

    pub fn cw(&self) -> u32 {
        self.cw
    }

    pub fn backoff_counter(&self) -> u32 {
        self.backoff_counter
    }

    pub fn retry_count(&self) -> u32 {
        self.retry_count
    }

    pub fn is_contending(&self) -> bool {
        matches!(self.state, DcfState::DifsWait | DcfState::Backoff)
    }

    pub fn next_interval(&self) -> SimDuration {
        if self.state == DcfState::DifsWait && self.difs_remaining == self.params.difs_slots() + 1 {
            self.params.sifs()
        } else {
            self.params.slot()
        }
    }

    fn rearm_difs(&mut self) {
        self.difs_remaining = self.params.difs_slots() + 1;
    }

    pub fn begin_access(&mut self, rng: &mut RngStream) -> Result<u32> {
        let n = rng.uniform_u32(self.cw);
        self.begin_access_with_counter(n)?;
        Ok(n)
    }

    pub fn begin_access_with_counter(&mut self, counter: u32) -> Result<()> {
        if self.state != DcfState::Idle {
            return Err(self.invalid());
        }
        if counter > self.cw {
            return Err(Error::InvalidInput(format!(
                "backoff counter {counter} exceeds cw {}",
                self.cw
            )));
        }
        self.backoff_counter = counter;
        self.state = DcfState::DifsWait;
        self.rearm_difs();
        Ok(())
    }

    /// Feeds the outcome of the interval that just elapsed.
    pub fn dcf_advance(&mut self, channel_idle: bool) -> Result<DcfAction> {
        match self.state {
            DcfState::DifsWait => {
                if !channel_idle {
                    self.rearm_difs();
                    return Ok(DcfAction::Freeze);
                }
                self.difs_remaining -= 1;
                if self.difs_remaining > 0 {
                    return Ok(DcfAction::Wait);
                }
                if self.backoff_counter == 0 {
                    self.state = DcfState::Tx;
                    Ok(DcfAction::TransmitNow)
                } else {
                    self.state = DcfState::Backoff;
                    Ok(DcfAction::Wait)
                }
            }
            DcfState::Backoff => {
                if !channel_idle {
                    self.state = DcfState::DifsWait;
                    self.rearm_difs();
                    return Ok(DcfAction::Freeze);
                }
                self.backoff_counter -= 1;
                if self.backoff_counter == 0 {
                    self.state = DcfState::Tx;
                    Ok(DcfAction::TransmitNow)
                } else {
                    Ok(DcfAction::Decrement)
                }
            }
            _ => Err(self.invalid()),
        }
    }

    /// Busy edge in the middle of an interval; no-op unless contending.
    pub fn sense_busy(&mut self) -> Result<DcfAction> {
        if !self.is_contending() {
            return Ok(DcfAction::Wait);
        }
        self.dcf_advance(false)
    }

    pub fn tx_complete(&mut self) -> Result<()> {
        if self.state != DcfState::Tx {
            return Err(self.invalid());
        }
        self.state = DcfState::AwaitAck;
        Ok(())
    }

    pub fn on_ack(&mut self) -> Result<()> {
        if self.state != DcfState::AwaitAck {
            return Err(self.invalid());
        }
        self.cw = cw_after(ExchangeEvent::Success, self.cw, &self.params);
        self.retry_count = 0;
        self.state = DcfState::Idle;
        Ok(())
    }

    /// Missing ACK. The frame is dropped, and the window reset, once
    /// `retry_limit` attempts have failed.
    pub fn on_ack_timeout(&mut self) -> Result<FailureOutcome> {
        if self.state != DcfState::AwaitAck {
            return Err(self.invalid());
        }
        self.state = DcfState::Idle;
        self.retry_count += 1;
        if self.retry_count >= self.params.retry_limit {
            self.retry_count = 0;
            self.cw = self.params.cw_min;
            return Ok(FailureOutcome::Drop);
        }
        self.cw = cw_after(ExchangeEvent::Failure, self.cw, &self.params);
        Ok(FailureOutcome::Retry)
    }

    /// Abandons a pending access (nothing left to send).
    pub fn abandon(&mut self) {
        if self.is_contending() {
            self.state = DcfState::Idle;
        }
    }

    fn invalid(&self) -> Error {
        Error::InvalidState {
            machine: "dcf",
            state: self.state.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeResult {
    Acked,
    Lost,
}

/// Resolves a data/ACK exchange after the fact. The data frame `data` must
/// already be on `medium` together with everything that overlaps it; if the
/// receiver decodes it, the ACK is registered SIFS after the data ends and
/// its own decode at the sender decides the result.
pub fn frame_exchange(
    medium: &mut Medium,
    params: &DcfParams,
    data: TxId,
    receiver: NodeId,
    data_threshold_db: f64,
    ack_power_dbm: f64,
) -> Result<ExchangeResult> {
    if medium.reception_outcome(data, receiver, data_threshold_db)? == Reception::Failed {
        return Ok(ExchangeResult::Lost);
    }
    let d = medium.get(data)?.clone();
    let start: SimTime = d.end + params.sifs();
    let ack = medium.transmit(
        receiver,
        start,
        start + params.ack_duration(),
        ack_power_dbm,
        BurstKind::Ack,
        Technology::Wifi,
    )?;
    Ok(
        match medium.reception_outcome(ack, d.tx_node, params.ack_decode_threshold_db)? {
            Reception::Decoded => ExchangeResult::Acked,
            Reception::Failed => ExchangeResult::Lost,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{ChannelModel, NodeKind, NodePosition, OperatorId};
    use proptest::prelude::*;

    fn engine() -> DcfEngine {
        DcfEngine::new(DcfParams::default())
    }

    fn run_difs(e: &mut DcfEngine) -> DcfAction {
        let mut last = DcfAction::Wait;
        for _ in 0..3 {
            last = e.dcf_advance(true).unwrap();
        }
        last
    }

    #[test]
    fn zero_counter_transmits_after_difs() {
        let mut e = engine();
        e.begin_access_with_counter(0).unwrap();
        assert_eq!(e.next_interval(), SimDuration::from_us(16));
        assert_eq!(run_difs(&mut e), DcfAction::TransmitNow);
        assert_eq!(e.state(), DcfState::Tx);
    }

    #[test]
    fn busy_during_difs_restarts_it() {
        let mut e = engine();
        e.begin_access_with_counter(3).unwrap();
        e.dcf_advance(true).unwrap();
        e.dcf_advance(true).unwrap();
        assert_eq!(e.dcf_advance(false).unwrap(), DcfAction::Freeze);
        assert_eq!(e.backoff_counter(), 3);
        assert_eq!(e.next_interval(), SimDuration::from_us(16));
        assert_eq!(run_difs(&mut e), DcfAction::Wait);
        assert_eq!(e.state(), DcfState::Backoff);
    }

    #[test]
    fn counter_frozen_through_foreign_burst() {
        let mut e = engine();
        e.begin_access_with_counter(6).unwrap();
        run_difs(&mut e);
        e.dcf_advance(true).unwrap();
        e.dcf_advance(true).unwrap();
        assert_eq!(e.backoff_counter(), 4);
        assert_eq!(e.sense_busy().unwrap(), DcfAction::Freeze);
        assert_eq!(e.backoff_counter(), 4);
        run_difs(&mut e);
        let mut n = 0;
        while e.dcf_advance(true).unwrap() != DcfAction::TransmitNow {
            n += 1;
        }
        assert_eq!(n + 1, 4);
    }

    #[test]
    fn advance_during_tx_is_an_error() {
        let mut e = engine();
        e.begin_access_with_counter(0).unwrap();
        run_difs(&mut e);
        assert!(e.dcf_advance(true).is_err());
        e.tx_complete().unwrap();
        assert!(e.dcf_advance(true).is_err());
    }

    #[test]
    fn cw_after_cases() {
        let p = DcfParams::default();
        assert_eq!(cw_after(ExchangeEvent::Failure, 15, &p), 31);
        assert_eq!(cw_after(ExchangeEvent::Failure, 1023, &p), 1023);
        assert_eq!(cw_after(ExchangeEvent::Success, 255, &p), 15);
    }

    fn attempt(e: &mut DcfEngine) {
        e.begin_access_with_counter(0).unwrap();
        run_difs(e);
        e.tx_complete().unwrap();
    }

    #[test]
    fn retry_limit_drops_and_resets() {
        let mut e = engine();
        for i in 1..7 {
            attempt(&mut e);
            assert_eq!(e.on_ack_timeout().unwrap(), FailureOutcome::Retry);
            assert_eq!(e.retry_count(), i);
        }
        assert_eq!(e.cw(), 1023);
        attempt(&mut e);
        assert_eq!(e.on_ack_timeout().unwrap(), FailureOutcome::Drop);
        assert_eq!(e.cw(), 15);
        assert_eq!(e.retry_count(), 0);
    }

    #[test]
    fn success_resets_window() {
        let mut e = engine();
        attempt(&mut e);
        e.on_ack_timeout().unwrap();
        assert_eq!(e.cw(), 31);
        attempt(&mut e);
        e.on_ack().unwrap();
        assert_eq!(e.cw(), 15);
    }

    #[test]
    fn params_validation() {
        assert!(DcfParams::default().validate().is_ok());
        let bad = DcfParams { cw_min: 16, ..DcfParams::default() };
        assert!(bad.validate().is_err());
        let bad = DcfParams { cw_min: 63, cw_max: 31, ..DcfParams::default() };
        assert!(bad.validate().is_err());
        let bad = DcfParams { difs_us: 30, ..DcfParams::default() };
        assert!(bad.validate().is_err());
    }

    fn pair_medium() -> Medium {
        let mk = |i: u32, kind, x| NodePosition {
            node_id: NodeId(i),
            operator: OperatorId(i as u8 / 2),
            kind,
            x_m: x,
            y_m: 0.0,
        };
        // two APs 5 m either side of a shared STA position pair
        let nodes = vec![
            mk(0, NodeKind::WifiAp, 0.0),
            mk(1, NodeKind::WifiSta, 10.0),
            mk(2, NodeKind::WifiAp, 20.0),
            mk(3, NodeKind::WifiSta, 10.5),
        ];
        let ch = ChannelModel {
            shadowing_sigma_db: 0.0,
            ..ChannelModel::default()
        };
        Medium::new(ch, nodes, &mut RngStream::new(1, "shadow")).unwrap()
    }

    #[test]
    fn clean_exchange_is_acked() {
        let mut m = pair_medium();
        let p = DcfParams::default();
        let d = m
            .transmit(NodeId(0), SimTime::ZERO, SimTime::from_us(500), 18.0, BurstKind::Data, Technology::Wifi)
            .unwrap();
        let r = frame_exchange(&mut m, &p, d, NodeId(1), 10.0, 18.0).unwrap();
        assert_eq!(r, ExchangeResult::Acked);
        let mut e = engine();
        attempt(&mut e);
        e.on_ack().unwrap();
        assert_eq!(e.cw(), 15);
    }

    #[test]
    fn simultaneous_zero_counters_collide() {
        let mut m = pair_medium();
        let p = DcfParams::default();
        let mut engines = [engine(), engine()];
        for e in &mut engines {
            attempt(e);
        }
        let end = SimTime::from_us(500);
        let a = m.transmit(NodeId(0), SimTime::ZERO, end, 18.0, BurstKind::Data, Technology::Wifi).unwrap();
        let b = m.transmit(NodeId(2), SimTime::ZERO, end, 18.0, BurstKind::Data, Technology::Wifi).unwrap();
        let ra = frame_exchange(&mut m, &p, a, NodeId(1), 10.0, 18.0).unwrap();
        let rb = frame_exchange(&mut m, &p, b, NodeId(3), 10.0, 18.0).unwrap();
        assert_eq!((ra, rb), (ExchangeResult::Lost, ExchangeResult::Lost));
        for e in &mut engines {
            assert_eq!(e.on_ack_timeout().unwrap(), FailureOutcome::Retry);
            assert_eq!(e.cw(), 31);
        }
    }

    #[test]
    fn airtime_arithmetic() {
        let p = DcfParams::default();
        assert_eq!(p.ppdu_airtime(1_000, 8e6), SimDuration::from_us(1_040));
        assert_eq!(p.max_payload_bytes(100e6), 24_500);
    }

    proptest! {
        #[test]
        fn counter_and_cw_stay_in_domain(script in proptest::collection::vec(0u8..4, 1..300), seed in 0u64..1000) {
            let mut rng = RngStream::new(seed, "dcf.prop");
            let mut e = engine();
            for step in script {
                match e.state() {
                    DcfState::Idle => { e.begin_access(&mut rng).unwrap(); }
                    DcfState::DifsWait | DcfState::Backoff => {
                        let before = e.backoff_counter();
                        let idle = step != 0;
                        let a = e.dcf_advance(idle).unwrap();
                        if !idle { prop_assert_eq!(e.backoff_counter(), before); }
                        if a == DcfAction::Decrement { prop_assert_eq!(e.backoff_counter() + 1, before); }
                    }
                    DcfState::Tx => e.tx_complete().unwrap(),
                    DcfState::AwaitAck => {
                        if step < 2 { e.on_ack_timeout().unwrap(); } else { e.on_ack().unwrap(); }
                    }
                }
                prop_assert!(is_cw_value(e.cw()) && e.cw() >= 15 && e.cw() <= 1023);
                prop_assert!(e.backoff_counter() <= e.cw() || e.state() != DcfState::Backoff);
            }
        }
    }

    #[test]
    fn rate_fallback_steps() {
        let p = DcfParams::default();
        let mut f = RateFallback::new();
        assert_eq!(f.backoff_db(4), 0.0);
        f.record(4, ExchangeEvent::Failure, &p, 20.0);
        f.record(4, ExchangeEvent::Failure, &p, 20.0);
        assert_eq!(f.backoff_db(4), 6.0);
        assert_eq!(f.backoff_db(5), 0.0);
        f.record(4, ExchangeEvent::Failure, &p, 7.5);
        assert_eq!(f.backoff_db(4), 7.5);
        for _ in 0..10 {
            f.record(4, ExchangeEvent::Success, &p, 20.0);
        }
        assert_eq!(f.backoff_db(4), 0.0);
    }
}
