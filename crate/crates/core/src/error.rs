use std::path::PathBuf;

use thiserror::Error;

use crate::sim_core::SimTime;

#[derive(Debug, Error)]
pub enum Error {
    #[error("event scheduled at {at} is before the current clock {now}")]
    PastEvent { at: SimTime, now: SimTime },

    #[error("run_until target {target} is before the current clock {now}")]
    PastHorizon { target: SimTime, now: SimTime },

    #[error("invalid range: lo {lo} > hi {hi}")]
    InvalidRange { lo: i64, hi: i64 },

    #[error("transmission {0} is not active at the queried instant")]
    NotActive(u64),

    #[error("unknown transmission {0}")]
    UnknownTransmission(u64),

    #[error("{machine} cannot advance while {state}")]
    InvalidState {
        machine: &'static str,
        state: &'static str,
    },

    #[error("multicarrier mode A requires a designated carrier")]
    NoDesignatedCarrier,

    #[error("{0}")]
    InvalidInput(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "load calibration failed: target band [{band_lo:.2}, {band_hi:.2}] not reachable; \
         occupancy {occ_lo:.3} at rate {rate_lo:.4}/s, {occ_hi:.3} at rate {rate_hi:.4}/s"
    )]
    Calibration {
        band_lo: f64,
        band_hi: f64,
        rate_lo: f64,
        occ_lo: f64,
        rate_hi: f64,
        occ_hi: f64,
    },

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
