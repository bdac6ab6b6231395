//! Discrete-event simulation of LAA (LTE Licensed-Assisted Access) and
//! Wi-Fi networks sharing one 5 GHz unlicensed carrier.

pub mod error;
pub mod harness;
pub mod laa_mac;
pub mod medium;
pub mod metrics;
pub mod sim_core;
pub mod traffic;
pub mod wifi_mac;

pub use error::{Error, Result};
