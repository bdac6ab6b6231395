//! Traffic sources, per-node transmit buffers and load classification.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim_core::{RngStream, SimDuration, SimTime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FtpFlowConfig {
    /// Poisson arrival rate per client.
    pub arrival_rate_per_s: f64,
    pub file_size_bytes: u64,
}

impl FtpFlowConfig {
    pub fn new(arrival_rate_per_s: f64) -> Self {
        Self {
            arrival_rate_per_s,
            file_size_bytes: 500_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate_per_s > 0.0) || !self.arrival_rate_per_s.is_finite() {
            return Err(Error::Config("arrival_rate_per_s must be > 0".into()));
        }
        if self.file_size_bytes == 0 {
            return Err(Error::Config("file_size_bytes must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VoipFlowConfig {
    pub packet_interval_ms: u64,
    pub payload_bytes: u64,
    pub delay_budget_ms: u64,
}

impl Default for VoipFlowConfig {
    fn default() -> Self {
        Self {
            packet_interval_ms: 20,
            payload_bytes: 72,
            delay_budget_ms: 50,
        }
    }
}

impl VoipFlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.packet_interval_ms == 0 || self.payload_bytes == 0 || self.delay_budget_ms == 0 {
            return Err(Error::Config("VoIP interval, payload and budget must be > 0".into()));
        }
        Ok(())
    }

    pub fn interval(&self) -> SimDuration {
        SimDuration::from_ms(self.packet_interval_ms)
    }

    pub fn budget(&self) -> SimDuration {
        SimDuration::from_ms(self.delay_budget_ms)
    }
}

/// Poisson arrival instants in `[0, t_end)`.
pub fn generate_ftp_arrivals(cfg: &FtpFlowConfig, stream: &mut RngStream, t_end: SimTime) -> Vec<SimTime> {
    let mut out = Vec::new();
    let mut t = 0.0;
    let end = t_end.as_secs_f64();
    loop {
        t += stream.exponential(cfg.arrival_rate_per_s);
        if t >= end {
            return out;
        }
        out.push(SimTime::from_secs_f64(t));
    }
}

/// Strictly periodic packet instants starting at `phase`, before `t_end`.
pub fn voip_packet_times(cfg: &VoipFlowConfig, phase: SimTime, t_end: SimTime) -> Vec<SimTime> {
    let mut out = Vec::new();
    let mut t = phase;
    while t < t_end {
        out.push(t);
        t += cfg.interval();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Voip,
    Ftp,
}

/// A flow is everything of one kind headed to one destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub dest: u32,
    pub kind: JobKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: u64,
    pub flow: FlowKey,
    pub arrival: SimTime,
    pub bytes: u64,
    pub unsent: u64,
    pub in_flight: u64,
    pub delivered: u64,
    pub first_service: Option<SimTime>,
}

/// Bytes of one job carried by a transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk {
    pub job: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ByteLedger {
    pub generated: u64,
    pub delivered: u64,
    pub in_flight: u64,
    pub queued: u64,
    pub dropped: u64,
}

impl ByteLedger {
    pub fn balanced(&self) -> bool {
        self.generated == self.delivered + self.in_flight + self.queued + self.dropped
    }
}

/// Per-node transmit buffer: FIFO per flow, plus a log of the intervals
/// during which anything was buffered or in flight.
#[derive(Debug, Clone, Default)]
pub struct TxBuffer {
    jobs: BTreeMap<u64, Job>,
    flows: BTreeMap<FlowKey, VecDeque<u64>>,
    busy_since: Option<SimTime>,
    intervals: Vec<(SimTime, SimTime)>,
    ledger: ByteLedger,
    rr_after: Option<FlowKey>,
}

impl TxBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn ledger(&self) -> ByteLedger {
        self.ledger
    }

    pub fn job(&self, id: u64) -> Option<&Job> {
        self.jobs.get(&id)
    }

    pub fn jobs(&self) -> impl Iterator<Item = &Job> + '_ {
        self.jobs.values()
    }

    fn touch(&mut self, now: SimTime) {
        match (self.busy_since, self.jobs.is_empty()) {
            (None, false) => self.busy_since = Some(now),
            (Some(s), true) => {
                if now > s {
                    self.intervals.push((s, now));
                }
                self.busy_since = None;
            }
            _ => {}
        }
    }

    pub fn enqueue(&mut self, now: SimTime, id: u64, flow: FlowKey, bytes: u64) {
        self.jobs.insert(
            id,
            Job {
                id,
                flow,
                arrival: now,
                bytes,
                unsent: bytes,
                in_flight: 0,
                delivered: 0,
                first_service: None,
            },
        );
        self.flows.entry(flow).or_default().push_back(id);
        self.ledger.generated += bytes;
        self.ledger.queued += bytes;
        self.touch(now);
    }

    fn flow_unsent(&self, flow: &FlowKey) -> u64 {
        self.flows
            .get(flow)
            .map(|q| q.iter().map(|id| self.jobs[id].unsent).sum())
            .unwrap_or(0)
    }

    pub fn has_unsent(&self) -> bool {
        self.ledger.queued > 0
    }

    pub fn unsent_for_dest(&self, dest: u32) -> u64 {
        [JobKind::Voip, JobKind::Ftp]
            .iter()
            .map(|&kind| self.flow_unsent(&FlowKey { dest, kind }))
            .sum()
    }

    /// Next flow with unsent bytes in round-robin order.
    pub fn next_flow(&mut self) -> Option<FlowKey> {
        let ready: Vec<FlowKey> = self
            .flows
            .keys()
            .filter(|k| self.flow_unsent(k) > 0)
            .copied()
            .collect();
        let pick = match self.rr_after {
            Some(last) => ready.iter().find(|k| **k > last).or(ready.first()),
            None => ready.first(),
        }
        .copied();
        if pick.is_some() {
            self.rr_after = pick;
        }
        pick
    }

    /// Up to `k` destinations with unsent bytes, continuing round-robin.
    pub fn next_dests(&mut self, k: usize) -> Vec<u32> {
        let mut dests: Vec<u32> = self
            .flows
            .keys()
            .map(|f| f.dest)
            .filter(|&d| self.unsent_for_dest(d) > 0)
            .collect();
        dests.dedup();
        let start = match self.rr_after {
            Some(last) => dests.iter().position(|&d| d > last.dest).unwrap_or(0),
            None => 0,
        };
        let picked: Vec<u32> = dests.iter().cycle().skip(start).take(k.min(dests.len())).copied().collect();
        if let Some(&last) = picked.last() {
            self.rr_after = Some(FlowKey {
                dest: last,
                kind: JobKind::Ftp,
            });
        }
        picked
    }

    /// Moves up to `max_bytes` of unsent data from `flow` into flight, oldest
    /// job first.
    pub fn take(&mut self, now: SimTime, flow: FlowKey, max_bytes: u64) -> Vec<Chunk> {
        let mut out = Vec::new();
        let mut left = max_bytes;
        let Some(q) = self.flows.get(&flow) else {
            return out;
        };
        for id in q {
            if left == 0 {
                break;
            }
            let job = self.jobs.get_mut(id).expect("queued job exists");
            let n = job.unsent.min(left);
            if n == 0 {
                continue;
            }
            job.unsent -= n;
            job.in_flight += n;
            job.first_service.get_or_insert(now);
            left -= n;
            out.push(Chunk { job: *id, bytes: n });
        }
        let moved = max_bytes - left;
        self.ledger.queued -= moved;
        self.ledger.in_flight += moved;
        out
    }

    /// Same as [`take`](Self::take) across a destination's flows, VoIP first.
    pub fn take_for_dest(&mut self, now: SimTime, dest: u32, max_bytes: u64) -> Vec<Chunk> {
        let mut out = self.take(now, FlowKey { dest, kind: JobKind::Voip }, max_bytes);
        let used: u64 = out.iter().map(|c| c.bytes).sum();
        out.extend(self.take(now, FlowKey { dest, kind: JobKind::Ftp }, max_bytes - used));
        out
    }

    /// Marks chunks delivered and returns jobs that completed.
    pub fn ack(&mut self, now: SimTime, chunks: &[Chunk]) -> Vec<Job> {
        let mut done = Vec::new();
        for c in chunks {
            let Some(job) = self.jobs.get_mut(&c.job) else {
                continue;
            };
            job.in_flight -= c.bytes;
            job.delivered += c.bytes;
            self.ledger.in_flight -= c.bytes;
            self.ledger.delivered += c.bytes;
            if job.delivered == job.bytes {
                done.push(self.remove(c.job));
            }
        }
        self.touch(now);
        done
    }

    /// Returns chunks to the queue for retransmission.
    pub fn nack(&mut self, chunks: &[Chunk]) {
        for c in chunks {
            if let Some(job) = self.jobs.get_mut(&c.job) {
                job.in_flight -= c.bytes;
                job.unsent += c.bytes;
                self.ledger.in_flight -= c.bytes;
                self.ledger.queued += c.bytes;
            }
        }
    }

    /// Drops every job touched by `chunks` with all of its undelivered bytes.
    pub fn drop_jobs(&mut self, now: SimTime, chunks: &[Chunk]) -> Vec<Job> {
        let mut out = Vec::new();
        for c in chunks {
            if let Some(job) = self.jobs.get(&c.job) {
                self.ledger.in_flight -= job.in_flight;
                self.ledger.queued -= job.unsent;
                self.ledger.dropped += job.in_flight + job.unsent;
                out.push(self.remove(c.job));
            }
        }
        self.touch(now);
        out
    }

    fn remove(&mut self, id: u64) -> Job {
        let job = self.jobs.remove(&id).expect("job exists");
        if let Some(q) = self.flows.get_mut(&job.flow) {
            q.retain(|&j| j != id);
            if q.is_empty() {
                self.flows.remove(&job.flow);
            }
        }
        job
    }

    /// Closed busy intervals plus the open one clipped at `until`.
    pub fn busy_intervals(&self, until: SimTime) -> Vec<(SimTime, SimTime)> {
        let mut v: Vec<_> = self
            .intervals
            .iter()
            .filter(|(s, _)| *s < until)
            .map(|&(s, e)| (s, e.min(until)))
            .collect();
        if let Some(s) = self.busy_since {
            if s < until {
                v.push((s, until));
            }
        }
        v
    }
}

/// Fraction of `[0, horizon)` during which the buffer held data.
pub fn buffer_occupancy(buffer: &TxBuffer, horizon: SimTime) -> Result<f64> {
    if horizon == SimTime::ZERO {
        return Err(Error::InvalidInput("occupancy horizon must be > 0".into()));
    }
    let busy: u64 = buffer
        .busy_intervals(horizon)
        .iter()
        .map(|&(s, e)| (e - s).as_ns())
        .sum();
    Ok((busy as f64 / horizon.as_ns() as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadClass {
    Low,
    Medium,
    High,
    OutOfBand,
}

impl LoadClass {
    /// Buffer-occupancy band for the three target classes.
    pub fn band(self) -> Option<(f64, f64)> {
        match self {
            LoadClass::Low => Some((0.15, 0.30)),
            LoadClass::Medium => Some((0.35, 0.50)),
            LoadClass::High => Some((0.60, 0.80)),
            LoadClass::OutOfBand => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LoadClass::Low => "low",
            LoadClass::Medium => "medium",
            LoadClass::High => "high",
            LoadClass::OutOfBand => "out_of_band",
        }
    }
}

impl fmt::Display for LoadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LoadClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(LoadClass::Low),
            "medium" => Ok(LoadClass::Medium),
            "high" => Ok(LoadClass::High),
            other => Err(Error::InvalidInput(format!(
                "unknown load class '{other}' (expected low, medium or high)"
            ))),
        }
    }
}

pub fn classify_load(mean_occupancy: f64) -> LoadClass {
    [LoadClass::Low, LoadClass::Medium, LoadClass::High]
        .into_iter()
        .find(|c| {
            let (lo, hi) = c.band().expect("target class");
            (lo..=hi).contains(&mean_occupancy)
        })
        .unwrap_or(LoadClass::OutOfBand)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ftp(dest: u32) -> FlowKey {
        FlowKey { dest, kind: JobKind::Ftp }
    }

    #[test]
    fn poisson_count_within_five_sigma() {
        let cfg = FtpFlowConfig::new(0.5);
        let mut total = 0usize;
        for rep in 0..20 {
            let mut s = RngStream::new(rep, "ftp.client0");
            let n = generate_ftp_arrivals(&cfg, &mut s, SimTime::from_ms(100_000)).len();
            assert!((n as f64 - 50.0).abs() <= 5.0 * 50f64.sqrt(), "count {n}");
            total += n;
        }
        let mean = total as f64 / 20.0;
        assert!((mean - 50.0).abs() < 5.0 * (50.0f64 / 20.0).sqrt());
    }

    #[test]
    fn empty_horizon_has_no_arrivals() {
        let mut s = RngStream::new(1, "ftp");
        assert!(generate_ftp_arrivals(&FtpFlowConfig::new(10.0), &mut s, SimTime::ZERO).is_empty());
    }

    #[test]
    fn voip_is_strictly_periodic() {
        let t = voip_packet_times(&VoipFlowConfig::default(), SimTime::from_ms(3), SimTime::from_ms(100));
        assert_eq!(t.len(), 5);
        assert!(t.windows(2).all(|w| w[1] - w[0] == SimDuration::from_ms(20)));
    }

    #[test]
    fn occupancy_cases() {
        let mut b = TxBuffer::new();
        let h = SimTime::from_ms(100_000);
        assert_eq!(buffer_occupancy(&b, h).unwrap(), 0.0);
        b.enqueue(SimTime::from_ms(10_000), 1, ftp(0), 100);
        let c = b.take(SimTime::from_ms(10_000), ftp(0), 100);
        b.ack(SimTime::from_ms(35_000), &c);
        assert!((buffer_occupancy(&b, h).unwrap() - 0.25).abs() < 1e-12);
        let mut sat = TxBuffer::new();
        sat.enqueue(SimTime::ZERO, 1, ftp(0), 100);
        assert_eq!(buffer_occupancy(&sat, h).unwrap(), 1.0);
        assert!(buffer_occupancy(&sat, SimTime::ZERO).is_err());
    }

    #[test]
    fn classification() {
        assert_eq!(classify_load(0.25), LoadClass::Low);
        assert_eq!(classify_load(0.45), LoadClass::Medium);
        assert_eq!(classify_load(0.70), LoadClass::High);
        assert_eq!(classify_load(0.32), LoadClass::OutOfBand);
        assert_eq!(classify_load(0.55), LoadClass::OutOfBand);
        assert_eq!(classify_load(0.15), LoadClass::Low);
        assert_eq!("medium".parse::<LoadClass>().unwrap(), LoadClass::Medium);
        assert!("extreme".parse::<LoadClass>().is_err());
    }

    #[test]
    fn fifo_within_flow_and_round_robin_across() {
        let mut b = TxBuffer::new();
        let t = SimTime::ZERO;
        b.enqueue(t, 1, ftp(3), 10);
        b.enqueue(t, 2, ftp(3), 10);
        b.enqueue(t, 3, ftp(5), 10);
        b.enqueue(t, 4, FlowKey { dest: 3, kind: JobKind::Voip }, 4);
        let c = b.take(t, ftp(3), 15);
        assert_eq!(c, vec![Chunk { job: 1, bytes: 10 }, Chunk { job: 2, bytes: 5 }]);
        let order: Vec<FlowKey> = (0..4).filter_map(|_| b.next_flow()).collect();
        assert_eq!(order[0], FlowKey { dest: 3, kind: JobKind::Voip });
        assert_eq!(order[1], ftp(3));
        assert_eq!(order[2], ftp(5));
        assert_eq!(order[3], order[0]);
        let d = b.take_for_dest(t, 3, 100);
        assert_eq!(d[0], Chunk { job: 4, bytes: 4 });
        assert_eq!(d[1], Chunk { job: 2, bytes: 5 });
    }

    #[test]
    fn nack_returns_bytes_and_drop_removes_job() {
        let mut b = TxBuffer::new();
        let t = SimTime::ZERO;
        b.enqueue(t, 1, ftp(0), 100);
        let c = b.take(t, ftp(0), 60);
        b.nack(&c);
        assert_eq!(b.job(1).unwrap().unsent, 100);
        assert!(b.ledger().balanced());
        let c = b.take(t, ftp(0), 60);
        b.ack(SimTime::from_us(5), &c[..]);
        let c = b.take(t, ftp(0), 60);
        assert_eq!(c[0].bytes, 40);
        let dropped = b.drop_jobs(SimTime::from_us(9), &c);
        assert_eq!(dropped[0].delivered, 60);
        assert_eq!(b.ledger().dropped, 40);
        assert!(b.is_empty());
        assert!(b.ledger().balanced());
    }

    #[test]
    fn next_dests_cycles() {
        let mut b = TxBuffer::new();
        for d in 0..6 {
            b.enqueue(SimTime::ZERO, d as u64, ftp(d), 10);
        }
        assert_eq!(b.next_dests(4), vec![0, 1, 2, 3]);
        assert_eq!(b.next_dests(4), vec![4, 5, 0, 1]);
    }

    proptest! {
        #[test]
        fn conservation_under_random_operations(ops in proptest::collection::vec((0u8..5, 1u64..5000), 1..200)) {
            let mut b = TxBuffer::new();
            let mut flight: Vec<Vec<Chunk>> = Vec::new();
            let mut id = 0;
            let mut now = SimTime::ZERO;
            for (op, n) in ops {
                now += SimDuration::from_us(n);
                match op {
                    0 => { id += 1; b.enqueue(now, id, ftp((n % 3) as u32), n); }
                    1 => { if let Some(f) = b.next_flow() { flight.push(b.take(now, f, n)); } }
                    2 => { if let Some(c) = flight.pop() { b.ack(now, &c); } }
                    3 => { if let Some(c) = flight.pop() { b.nack(&c); } }
                    _ => {
                        if let Some(c) = flight.pop() {
                            let gone: Vec<u64> = b.drop_jobs(now, &c).iter().map(|j| j.id).collect();
                            for f in &mut flight { f.retain(|c| !gone.contains(&c.job)); }
                        }
                    }
                }
                prop_assert!(b.ledger().balanced());
                let occ = buffer_occupancy(&b, now + SimDuration::from_ns(1)).unwrap();
                prop_assert!((0.0..=1.0).contains(&occ));
                let iv = b.busy_intervals(now);
                prop_assert!(iv.windows(2).all(|w| w[0].1 <= w[1].0));
            }
        }
    }
}
