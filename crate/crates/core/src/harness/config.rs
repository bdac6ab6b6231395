use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laa_mac::{ed_threshold_dbm, DrsConfig, EdThresholdParams, PriorityClassParams};
use crate::medium::{ChannelModel, RateModel, Technology};
use crate::traffic::{LoadClass, VoipFlowConfig};
use crate::wifi_mac::DcfParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Indoor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaaConfig {
    pub priority_class: u8,
    /// Overrides the built-in parameters; required for classes 1 and 2.
    pub class_params: Option<PriorityClassParams>,
    pub ecca_slot_us: u64,
    pub ed_reference_power_dbm: f64,
    /// True when no other technology can be present; selects the longer
    /// MCOT and the exclusive-band ED threshold.
    pub exclusive_band: bool,
    pub exclusive_ed_threshold_dbm: Option<f64>,
    pub reservation_signal: bool,
    pub japan_mode: bool,
    pub max_ues_per_subframe: u32,
    pub harq_feedback_delay_subframes: u64,
    /// Scheduling grants sent on the licensed PCell; DTX feedback is then
    /// exempt from the CWS rule.
    pub cross_carrier_scheduling: bool,
    pub control_decode_threshold_db: f64,
    /// Lowest SINR a UE reports as CSI.
    pub csi_floor_db: f64,
    /// HARQ feedback and other control traffic ride the licensed carrier.
    pub licensed_anchor: bool,
    /// Lets the licensed carrier take DL data too (off in the demanding case).
    pub licensed_data_offload: bool,
    pub drs_enabled: bool,
    pub drs: DrsConfig,
}

impl Default for LaaConfig {
    fn default() -> Self {
        Self {
            priority_class: 3,
            class_params: None,
            ecca_slot_us: 9,
            ed_reference_power_dbm: 23.0,
            exclusive_band: false,
            exclusive_ed_threshold_dbm: None,
            reservation_signal: true,
            japan_mode: false,
            max_ues_per_subframe: 4,
            harq_feedback_delay_subframes: 4,
            cross_carrier_scheduling: false,
            control_decode_threshold_db: -3.0,
            csi_floor_db: -5.0,
            licensed_anchor: true,
            licensed_data_offload: false,
            drs_enabled: true,
            drs: DrsConfig::default(),
        }
    }
}

impl LaaConfig {
    pub fn class(&self) -> Result<PriorityClassParams> {
        let c = match &self.class_params {
            Some(c) => c.clone(),
            None => PriorityClassParams::standard(self.priority_class).ok_or_else(|| {
                Error::Config(format!(
                    "priority class {} needs explicit class_params",
                    self.priority_class
                ))
            })?,
        };
        if c.class_id != self.priority_class {
            return Err(Error::Config("class_params.class_id must equal priority_class".into()));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn ed_params(&self, p_tx_dbm: f64, bw_mhz: f64) -> EdThresholdParams {
        EdThresholdParams {
            p_h_dbm: self.ed_reference_power_dbm,
            p_tx_dbm,
            bw_mhz,
            shared_band: !self.exclusive_band,
            exclusive_threshold_dbm: self.exclusive_ed_threshold_dbm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalRates {
    pub low: f64,
    pub medium: f64,
    pub high: f64,
}

impl ArrivalRates {
    pub fn get(&self, load: LoadClass) -> Result<f64> {
        match load {
            LoadClass::Low => Ok(self.low),
            LoadClass::Medium => Ok(self.medium),
            LoadClass::High => Ok(self.high),
            LoadClass::OutOfBand => Err(Error::InvalidInput("no arrival rate for out_of_band".into())),
        }
    }

    pub fn set(&mut self, load: LoadClass, rate: f64) {
        match load {
            LoadClass::Low => self.low = rate,
            LoadClass::Medium => self.medium = rate,
            LoadClass::High => self.high = rate,
            LoadClass::OutOfBand => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub file_size_bytes: u64,
    /// Per-client Poisson FTP rates for each load class.
    pub arrival_rate_per_s: ArrivalRates,
    /// Adds one DL and one UL VoIP stream per client when present.
    pub voip: Option<VoipFlowConfig>,
    /// One-way latency of UL VoIP carried on an LAA operator's licensed carrier.
    pub licensed_ul_latency_us: u64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            file_size_bytes: 500_000,
            arrival_rate_per_s: ArrivalRates {
                low: 0.35,
                medium: 0.46,
                high: 1.15,
            },
            voip: None,
            licensed_ul_latency_us: 4_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub occupancy_threshold_dbm: f64,
    pub rssi_aggregation_ms: u32,
    pub voip_late_fraction: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            occupancy_threshold_dbm: -72.0,
            rssi_aggregation_ms: 1,
            voip_late_fraction: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepTechnologies {
    pub step1: [Technology; 2],
    pub step2: [Technology; 2],
}

impl Default for StepTechnologies {
    fn default() -> Self {
        Self {
            step1: [Technology::Wifi, Technology::Wifi],
            step2: [Technology::Wifi, Technology::Laa],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub replications: u32,
    pub duration_ms: u64,
    pub max_iterations: u32,
    pub min_rate_per_s: f64,
    pub max_rate_per_s: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            replications: 10,
            duration_ms: 10_000,
            max_iterations: 24,
            min_rate_per_s: 0.01,
            max_rate_per_s: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub scenario_kind: ScenarioKind,
    pub building_length_m: f64,
    pub building_width_m: f64,
    pub nodes_per_operator: u32,
    pub clients_per_operator: u32,
    /// Operator 2's row is shifted along the long axis by U(-max, max).
    pub op2_offset_max_m: f64,
    pub infra_tx_power_dbm: f64,
    pub client_tx_power_dbm: f64,
    pub unlicensed_carrier_id: u32,
    pub duration_ms: u64,
    pub master_seed: u64,
    pub replications: u32,
    pub channel: ChannelModel,
    pub rate: RateModel,
    pub dcf: DcfParams,
    pub laa: LaaConfig,
    pub traffic: TrafficConfig,
    pub metrics: MetricsConfig,
    pub steps: StepTechnologies,
    pub calibration: CalibrationConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario_kind: ScenarioKind::Indoor,
            building_length_m: 120.0,
            building_width_m: 50.0,
            nodes_per_operator: 4,
            clients_per_operator: 10,
            op2_offset_max_m: 10.0,
            infra_tx_power_dbm: 18.0,
            client_tx_power_dbm: 18.0,
            unlicensed_carrier_id: 3,
            duration_ms: 10_000,
            master_seed: 1,
            replications: 20,
            channel: ChannelModel::default(),
            rate: RateModel::default(),
            dcf: DcfParams::default(),
            laa: LaaConfig::default(),
            traffic: TrafficConfig::default(),
            metrics: MetricsConfig::default(),
            steps: StepTechnologies::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.building_length_m > 0.0 && self.building_width_m > 0.0) {
            return Err(Error::Config("building dimensions must be > 0".into()));
        }
        if self.nodes_per_operator == 0 || self.clients_per_operator == 0 {
            return Err(Error::Config("need at least one node and one client per operator".into()));
        }
        let spacing = self.building_length_m.max(self.building_width_m) / self.nodes_per_operator as f64;
        if spacing < 1.0 {
            return Err(Error::Config("building too small for the node count".into()));
        }
        if !(self.op2_offset_max_m >= 0.0) || self.op2_offset_max_m > spacing / 2.0 {
            return Err(Error::Config(format!(
                "op2_offset_max_m must be in [0, {:.1}]",
                spacing / 2.0
            )));
        }
        if self.duration_ms == 0 {
            return Err(Error::Config("duration_ms must be > 0".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be > 0".into()));
        }
        self.channel.validate()?;
        self.rate.validate()?;
        self.dcf.validate()?;
        self.laa.class()?;
        if self.laa.ecca_slot_us < 9 {
            return Err(Error::Config("ecca_slot_us must be at least 9".into()));
        }
        if self.laa.max_ues_per_subframe == 0 {
            return Err(Error::Config("max_ues_per_subframe must be > 0".into()));
        }
        self.laa.drs.validate()?;
        ed_threshold_dbm(&self.laa.ed_params(self.infra_tx_power_dbm, self.channel.bandwidth_mhz))?;
        let r = &self.traffic.arrival_rate_per_s;
        if [r.low, r.medium, r.high].iter().any(|x| !(*x > 0.0)) {
            return Err(Error::Config("arrival rates must be > 0".into()));
        }
        if self.traffic.file_size_bytes == 0 {
            return Err(Error::Config("file_size_bytes must be > 0".into()));
        }
        if let Some(v) = &self.traffic.voip {
            v.validate()?;
        }
        if !(1..=5).contains(&self.metrics.rssi_aggregation_ms) {
            return Err(Error::Config("rssi_aggregation_ms must be in 1..=5".into()));
        }
        let s = &self.steps;
        if s.step1[0] != s.step2[0] {
            return Err(Error::Config(
                "step 2 may only change operator 2's technology".into(),
            ));
        }
        if self.calibration.replications < 10 {
            return Err(Error::Config("calibration needs at least 10 replications".into()));
        }
        if !(self.calibration.min_rate_per_s > 0.0
            && self.calibration.max_rate_per_s > self.calibration.min_rate_per_s)
        {
            return Err(Error::Config("calibration rate bracket must satisfy 0 < min < max".into()));
        }
        Ok(())
    }

    pub fn total_nodes(&self) -> usize {
        2 * (self.nodes_per_operator + self.clients_per_operator) as usize
    }
}
