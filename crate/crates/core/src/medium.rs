//! Shared-channel model.
//!
//! Log-distance pathloss with per-link shadowing frozen for a replication,
//! linear-domain energy summation for sensing, and min-SINR-over-duration
//! reception. Energy detection is ideal: the listener sees exactly the sum of
//! the received powers plus the thermal floor.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim_core::{RngStream, SimDuration, SimTime};

/// Thermal noise density at 290 K.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OperatorId(pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    LaaEnb,
    LaaUe,
    WifiAp,
    WifiSta,
}

impl NodeKind {
    pub fn is_infrastructure(self) -> bool {
        matches!(self, NodeKind::LaaEnb | NodeKind::WifiAp)
    }

    pub fn technology(self) -> Technology {
        match self {
            NodeKind::LaaEnb | NodeKind::LaaUe => Technology::Laa,
            NodeKind::WifiAp | NodeKind::WifiSta => Technology::Wifi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technology {
    Laa,
    Wifi,
}

impl Technology {
    pub fn as_str(self) -> &'static str {
        match self {
            Technology::Laa => "laa",
            Technology::Wifi => "wifi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodePosition {
    pub node_id: NodeId,
    pub operator: OperatorId,
    pub kind: NodeKind,
    pub x_m: f64,
    pub y_m: f64,
}

impl NodePosition {
    pub fn distance_m(&self, other: &NodePosition) -> f64 {
        (self.x_m - other.x_m).hypot(self.y_m - other.y_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelModel {
    pub pathloss_exponent: f64,
    pub reference_loss_db: f64,
    /// Extra loss applied once on links between different operators.
    pub wall_loss_db: f64,
    pub shadowing_sigma_db: f64,
    pub noise_figure_db: f64,
    pub bandwidth_mhz: f64,
    pub min_distance_m: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            pathloss_exponent: 3.0,
            reference_loss_db: 46.4,
            wall_loss_db: 0.0,
            shadowing_sigma_db: 6.0,
            noise_figure_db: 9.0,
            bandwidth_mhz: 20.0,
            min_distance_m: 0.5,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        let losses = [
            ("pathloss_exponent", self.pathloss_exponent),
            ("reference_loss_db", self.reference_loss_db),
            ("wall_loss_db", self.wall_loss_db),
            ("shadowing_sigma_db", self.shadowing_sigma_db),
            ("noise_figure_db", self.noise_figure_db),
        ];
        for (name, v) in losses {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("channel.{name} must be >= 0, got {v}")));
            }
        }
        if !(self.bandwidth_mhz > 0.0) {
            return Err(Error::Config("channel.bandwidth_mhz must be > 0".into()));
        }
        if !(self.min_distance_m > 0.0) {
            return Err(Error::Config("channel.min_distance_m must be > 0".into()));
        }
        Ok(())
    }

    pub fn noise_floor_dbm(&self) -> f64 {
        THERMAL_NOISE_DBM_PER_HZ + 10.0 * (self.bandwidth_mhz * 1e6).log10() + self.noise_figure_db
    }

    /// Deterministic part of the loss between two positions.
    pub fn distance_loss_db(&self, a: &NodePosition, b: &NodePosition) -> f64 {
        let d = a.distance_m(b).max(self.min_distance_m);
        let wall = if a.operator != b.operator {
            self.wall_loss_db
        } else {
            0.0
        };
        self.reference_loss_db + 10.0 * self.pathloss_exponent * d.log10() + wall
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurstKind {
    Data,
    Drs,
    Reservation,
    Ack,
    Feedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxId(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveTransmission {
    pub id: TxId,
    pub tx_node: NodeId,
    pub start: SimTime,
    pub end: SimTime,
    pub tx_power_dbm: f64,
    pub carrier_id: u32,
    pub kind: BurstKind,
    pub technology: Technology,
}

impl ActiveTransmission {
    pub fn is_active_at(&self, t: SimTime) -> bool {
        self.start <= t && t < self.end
    }

    pub fn overlaps(&self, from: SimTime, to: SimTime) -> bool {
        self.start < to && from < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    Decoded,
    Failed,
}

/// Truncated-Shannon link abstraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateModel {
    pub laa_efficiency: f64,
    pub wifi_efficiency: f64,
    pub laa_cap_mbps: f64,
    pub wifi_cap_mbps: f64,
    /// Decode threshold sits this far below the SINR implied by the rate.
    pub decode_margin_db: f64,
}

impl Default for RateModel {
    fn default() -> Self {
        Self {
            laa_efficiency: 0.75,
            wifi_efficiency: 0.65,
            laa_cap_mbps: 150.0,
            wifi_cap_mbps: 130.0,
            decode_margin_db: 3.0,
        }
    }
}

impl RateModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.laa_efficiency > 0.0 && self.wifi_efficiency > 0.0) {
            return Err(Error::Config("rate efficiencies must be > 0".into()));
        }
        if !(self.laa_cap_mbps > 0.0 && self.wifi_cap_mbps > 0.0) {
            return Err(Error::Config("rate caps must be > 0".into()));
        }
        Ok(())
    }

    fn params(&self, tech: Technology) -> (f64, f64) {
        match tech {
            Technology::Laa => (self.laa_efficiency, self.laa_cap_mbps * 1e6),
            Technology::Wifi => (self.wifi_efficiency, self.wifi_cap_mbps * 1e6),
        }
    }

    /// `min(cap, B * eta * log2(1 + sinr))`.
    pub fn rate_bps(&self, sinr_db: f64, tech: Technology, bandwidth_mhz: f64) -> f64 {
        let (eta, cap) = self.params(tech);
        let sinr = if sinr_db == f64::NEG_INFINITY {
            0.0
        } else {
            10f64.powf(sinr_db / 10.0)
        };
        (bandwidth_mhz * 1e6 * eta * (1.0 + sinr).log2()).min(cap)
    }

    /// SINR at which the uncapped map yields `rate`.
    pub fn implied_sinr_db(&self, rate_bps: f64, tech: Technology, bandwidth_mhz: f64) -> f64 {
        let (eta, _) = self.params(tech);
        let x = 2f64.powf(rate_bps / (bandwidth_mhz * 1e6 * eta)) - 1.0;
        10.0 * x.log10()
    }

    pub fn decode_threshold_db(&self, rate_bps: f64, tech: Technology, bandwidth_mhz: f64) -> f64 {
        self.implied_sinr_db(rate_bps, tech, bandwidth_mhz) - self.decode_margin_db
    }
}

/// Geometry plus the on-air transmission log.
pub struct Medium {
    channel: ChannelModel,
    nodes: Vec<NodePosition>,
    /// Row-major `n x n` linear gains (1 / pathloss).
    gain: Vec<f64>,
    loss_db: Vec<f64>,
    noise_mw: f64,
    history: VecDeque<ActiveTransmission>,
    first_id: u64,
    next_id: u64,
    active: Vec<TxId>,
    longest: SimDuration,
}

impl Medium {
    /// Node ids must equal their index in `nodes`. Shadowing is drawn from
    /// `shadowing` once per unordered pair, in index order.
    pub fn new(
        channel: ChannelModel,
        nodes: Vec<NodePosition>,
        shadowing: &mut RngStream,
    ) -> Result<Self> {
        channel.validate()?;
        for (i, n) in nodes.iter().enumerate() {
            if n.node_id.0 as usize != i {
                return Err(Error::InvalidInput(format!(
                    "node id {} at index {i}",
                    n.node_id.0
                )));
            }
        }
        let n = nodes.len();
        let mut loss_db = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let l = channel.distance_loss_db(&nodes[i], &nodes[j])
                    + shadowing.normal(0.0, channel.shadowing_sigma_db);
                loss_db[i * n + j] = l;
                loss_db[j * n + i] = l;
            }
        }
        let gain = loss_db.iter().map(|l| 10f64.powf(-l / 10.0)).collect();
        let noise_mw = dbm_to_mw(channel.noise_floor_dbm());
        Ok(Self {
            channel,
            nodes,
            gain,
            loss_db,
            noise_mw,
            history: VecDeque::new(),
            first_id: 0,
            next_id: 0,
            active: Vec::new(),
            longest: SimDuration::ZERO,
        })
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn nodes(&self) -> &[NodePosition] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &NodePosition {
        &self.nodes[id.0 as usize]
    }

    pub fn noise_floor_dbm(&self) -> f64 {
        self.channel.noise_floor_dbm()
    }

    pub fn noise_mw(&self) -> f64 {
        self.noise_mw
    }

    /// Total loss including frozen shadowing; symmetric.
    pub fn pathloss_db(&self, a: NodeId, b: NodeId) -> f64 {
        let n = self.nodes.len();
        let (a, b) = (a.0 as usize, b.0 as usize);
        if a == b {
            return self.channel.reference_loss_db
                + 10.0 * self.channel.pathloss_exponent * self.channel.min_distance_m.log10();
        }
        self.loss_db[a * n + b]
    }

    pub fn rx_power_mw(&self, tx: &ActiveTransmission, rx: NodeId) -> f64 {
        let n = self.nodes.len();
        dbm_to_mw(tx.tx_power_dbm) * self.gain[tx.tx_node.0 as usize * n + rx.0 as usize]
    }

    pub fn rx_power_dbm(&self, tx: &ActiveTransmission, rx: NodeId) -> f64 {
        tx.tx_power_dbm - self.pathloss_db(tx.tx_node, rx)
    }

    /// Registers a transmission. Starts must be non-decreasing.
    pub fn transmit(
        &mut self,
        tx_node: NodeId,
        start: SimTime,
        end: SimTime,
        tx_power_dbm: f64,
        kind: BurstKind,
        technology: Technology,
    ) -> Result<TxId> {
        if end <= start {
            return Err(Error::InvalidInput(format!(
                "transmission must have end > start ({start} .. {end})"
            )));
        }
        if let Some(last) = self.history.back() {
            if start < last.start {
                return Err(Error::InvalidInput(
                    "transmissions must be registered in start order".into(),
                ));
            }
        }
        let id = TxId(self.next_id);
        self.next_id += 1;
        self.longest = self.longest.max(end - start);
        self.history.push_back(ActiveTransmission {
            id,
            tx_node,
            start,
            end,
            tx_power_dbm,
            carrier_id: 0,
            kind,
            technology,
        });
        self.active.push(id);
        Ok(id)
    }

    pub fn get(&self, id: TxId) -> Result<&ActiveTransmission> {
        if id.0 < self.first_id || id.0 >= self.next_id {
            return Err(Error::UnknownTransmission(id.0));
        }
        Ok(&self.history[(id.0 - self.first_id) as usize])
    }

    /// Drops ended transmissions from the active set.
    pub fn expire(&mut self, now: SimTime) {
        let first = self.first_id;
        let hist = &self.history;
        self.active
            .retain(|id| hist[(id.0 - first) as usize].end > now);
    }

    /// Forgets history that ended before `horizon`.
    pub fn prune(&mut self, horizon: SimTime) {
        while let Some(front) = self.history.front() {
            if front.end >= horizon || self.active.contains(&front.id) {
                break;
            }
            self.history.pop_front();
            self.first_id += 1;
        }
    }

    pub fn active(&self) -> impl Iterator<Item = &ActiveTransmission> + '_ {
        self.active.iter().map(move |id| &self.history[(id.0 - self.first_id) as usize])
    }

    /// Transmissions in history overlapping `[from, to)`.
    pub fn overlapping(
        &self,
        from: SimTime,
        to: SimTime,
    ) -> impl Iterator<Item = &ActiveTransmission> + '_ {
        let earliest = from.checked_sub(self.longest).unwrap_or(SimTime::ZERO);
        // history is in start order; walk back until starts are too early
        let cut = self
            .history
            .partition_point(|tx| tx.start < earliest);
        self.history
            .range(cut..)
            .take_while(move |tx| tx.start < to)
            .filter(move |tx| tx.overlaps(from, to))
    }

    /// Received interference in mW at `listener` from everything on air at
    /// `t` except transmissions by the listener itself.
    pub fn sensed_foreign_mw(&self, listener: NodeId, t: SimTime) -> f64 {
        self.active()
            .filter(|tx| tx.tx_node != listener && tx.is_active_at(t))
            .map(|tx| self.rx_power_mw(tx, listener))
            .sum()
    }

    /// Energy sensed at `listener` at instant `t`, thermal floor included.
    pub fn sensed_energy_dbm(&self, listener: NodeId, t: SimTime) -> f64 {
        let signal: f64 = self
            .overlapping(t, t + SimDuration::from_ns(1))
            .filter(|tx| tx.tx_node != listener)
            .map(|tx| self.rx_power_mw(tx, listener))
            .sum();
        mw_to_dbm(signal + self.noise_mw)
    }

    /// SINR of `wanted` at `rx` at instant `t`.
    pub fn sinr_db(&self, rx: NodeId, wanted: TxId, t: SimTime) -> Result<f64> {
        let w = self.get(wanted)?;
        if !w.is_active_at(t) {
            return Err(Error::NotActive(wanted.0));
        }
        Ok(self.sinr_at(rx, w, t))
    }

    fn sinr_at(&self, rx: NodeId, w: &ActiveTransmission, t: SimTime) -> f64 {
        let mut interference = self.noise_mw;
        for tx in self.overlapping(t, t + SimDuration::from_ns(1)) {
            if tx.id == w.id {
                continue;
            }
            if tx.tx_node == rx {
                // half duplex: the receiver is talking
                return f64::NEG_INFINITY;
            }
            interference += self.rx_power_mw(tx, rx);
        }
        mw_to_dbm(self.rx_power_mw(w, rx)) - mw_to_dbm(interference)
    }

    /// Minimum SINR of `wanted` at `rx` over `[from, to)`, clipped to the
    /// wanted transmission's own extent.
    pub fn min_sinr_db(&self, rx: NodeId, wanted: TxId, from: SimTime, to: SimTime) -> Result<f64> {
        let w = self.get(wanted)?;
        let from = from.max(w.start);
        let to = to.min(w.end);
        if from >= to {
            return Err(Error::NotActive(wanted.0));
        }
        let mut breaks = vec![from];
        for tx in self.overlapping(from, to) {
            if tx.id == w.id {
                continue;
            }
            if tx.start > from {
                breaks.push(tx.start);
            }
            if tx.end < to {
                breaks.push(tx.end);
            }
        }
        breaks.sort_unstable();
        breaks.dedup();
        Ok(breaks
            .into_iter()
            .map(|t| self.sinr_at(rx, w, t))
            .fold(f64::INFINITY, f64::min))
    }

    /// Decoded iff the minimum SINR across the whole transmission meets
    /// `threshold_db`.
    pub fn reception_outcome(&self, wanted: TxId, rx: NodeId, threshold_db: f64) -> Result<Reception> {
        let w = self.get(wanted)?;
        let min = self.min_sinr_db(rx, wanted, w.start, w.end)?;
        Ok(if min >= threshold_db {
            Reception::Decoded
        } else {
            Reception::Failed
        })
    }
}
