//! User-perceived throughput, VoIP outage, L1 RSSI averaging and channel
//! occupancy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::{dbm_to_mw, mw_to_dbm};
use crate::sim_core::{SimDuration, SimTime};

/// L1 RSSI samples per millisecond (one per OFDM symbol).
pub const L1_SAMPLES_PER_MS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub bytes: u64,
    pub arrival: SimTime,
    pub first_service: SimTime,
    pub completion: SimTime,
}

impl FileRecord {
    pub fn active_time(&self) -> SimDuration {
        self.completion - self.first_service
    }
}

/// `8 * bytes / (completion - first_service)`; waiting before the first
/// byte is served does not count.
pub fn upt_bps(record: &FileRecord) -> Result<f64> {
    if record.bytes == 0 {
        return Err(Error::InvalidInput("zero-byte file has no UPT".into()));
    }
    if record.arrival > record.first_service || record.first_service >= record.completion {
        return Err(Error::InvalidInput(format!(
            "file timestamps out of order: arrival {}, first service {}, completion {}",
            record.arrival, record.first_service, record.completion
        )));
    }
    Ok(8.0 * record.bytes as f64 / record.active_time().as_secs_f64())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UptSummary {
    pub mean: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
}

/// Linear-interpolation percentile of already sorted data, `p` in [0, 100].
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

pub fn upt_summary(values: &[f64]) -> Result<UptSummary> {
    if values.is_empty() {
        return Err(Error::Empty("UPT sample set"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(UptSummary {
        mean: v.iter().sum::<f64>() / v.len() as f64,
        p5: percentile_sorted(&v, 5.0),
        p50: percentile_sorted(&v, 50.0),
        p95: percentile_sorted(&v, 95.0),
    })
}

/// Aggregates L1 samples into `agg_ms` windows by linear (mW) averaging.
/// A trailing partial window is discarded.
pub fn rssi_report(l1_samples_dbm: &[f64], agg_ms: u32) -> Result<Vec<f64>> {
    if !(1..=5).contains(&agg_ms) {
        return Err(Error::InvalidInput(format!(
            "RSSI aggregation must be 1..=5 ms, got {agg_ms}"
        )));
    }
    let w = agg_ms as usize * L1_SAMPLES_PER_MS;
    Ok(l1_samples_dbm
        .chunks_exact(w)
        .map(|c| mw_to_dbm(c.iter().map(|&s| dbm_to_mw(s)).sum::<f64>() / w as f64))
        .collect())
}

/// Percentage of samples strictly above `threshold_dbm`.
pub fn channel_occupancy(l1_samples_dbm: &[f64], threshold_dbm: f64) -> Result<f64> {
    if l1_samples_dbm.is_empty() {
        return Err(Error::Empty("RSSI sample set"));
    }
    let busy = l1_samples_dbm.iter().filter(|&&s| s > threshold_dbm).count();
    Ok(100.0 * busy as f64 / l1_samples_dbm.len() as f64)
}

/// Fraction of users with more than `max_late_fraction` of their packets
/// later than `budget`. `None` marks a dropped packet.
pub fn voip_outage(
    per_user_delays: &[Vec<Option<SimDuration>>],
    budget: SimDuration,
    max_late_fraction: f64,
) -> Result<f64> {
    if per_user_delays.is_empty() {
        return Err(Error::Empty("VoIP user set"));
    }
    let outaged = per_user_delays
        .iter()
        .filter(|pkts| {
            let late = pkts.iter().filter(|d| d.is_none_or(|d| d > budget)).count();
            !pkts.is_empty() && late as f64 > max_late_fraction * pkts.len() as f64
        })
        .count();
    Ok(outaged as f64 / per_user_delays.len() as f64)
}

/// Start of L1 sample `k` counted from `from`.
fn sample_edge(from: SimTime, k: usize) -> SimTime {
    from + SimDuration::from_ns(k as u64 * 1_000_000 / L1_SAMPLES_PER_MS as u64)
}

/// Symbol-averaged received power in dBm over `n` consecutive L1 windows
/// starting at `from`. `arrivals` lists `(start, end, mW)` of every signal
/// heard by the measuring node; `noise_mw` is added throughout.
pub fn l1_rssi_samples(
    arrivals: &[(SimTime, SimTime, f64)],
    noise_mw: f64,
    from: SimTime,
    n: usize,
) -> Vec<f64> {
    let mut edges: Vec<(SimTime, f64)> = Vec::with_capacity(arrivals.len() * 2);
    for &(s, e, p) in arrivals {
        if e > s {
            edges.push((s, p));
            edges.push((e, -p));
        }
    }
    edges.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out = Vec::with_capacity(n);
    let mut level = 0.0f64;
    let mut i = 0;
    // apply everything that starts before the first window
    while i < edges.len() && edges[i].0 <= from {
        level += edges[i].1;
        i += 1;
    }
    for k in 0..n {
        let (ws, we) = (sample_edge(from, k), sample_edge(from, k + 1));
        let mut t = ws;
        let mut energy = 0.0;
        while i < edges.len() && edges[i].0 < we {
            energy += level.max(0.0) * (edges[i].0 - t).as_ns() as f64;
            t = edges[i].0;
            level += edges[i].1;
            i += 1;
        }
        energy += level.max(0.0) * (we - t).as_ns() as f64;
        out.push(mw_to_dbm(energy / (we - ws).as_ns() as f64 + noise_mw));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rec(bytes: u64, arrival_ms: u64, first_ms: u64, done_ms: u64) -> FileRecord {
        FileRecord {
            bytes,
            arrival: SimTime::from_ms(arrival_ms),
            first_service: SimTime::from_ms(first_ms),
            completion: SimTime::from_ms(done_ms),
        }
    }

    #[test]
    fn upt_cases() {
        assert_eq!(upt_bps(&rec(500_000, 0, 0, 100)).unwrap(), 40e6);
        assert_eq!(upt_bps(&rec(500_000, 0, 5_000, 5_100)).unwrap(), 40e6);
        assert!(upt_bps(&rec(0, 0, 0, 100)).is_err());
        assert!(upt_bps(&rec(10, 0, 100, 100)).is_err());
    }

    #[test]
    fn summary_cases() {
        let s = upt_summary(&[7.0; 5]).unwrap();
        assert_eq!((s.mean, s.p5, s.p50, s.p95), (7.0, 7.0, 7.0, 7.0));
        assert_eq!(upt_summary(&[30e6, 10e6, 20e6]).unwrap().p50, 20e6);
        assert!(upt_summary(&[]).is_err());
    }

    #[test]
    fn summary_matches_sort_based_oracle() {
        let mut rng = crate::sim_core::RngStream::new(5, "upt.oracle");
        let v: Vec<f64> = (0..1000).map(|_| rng.uniform_f64(1e6, 150e6)).collect();
        let s = upt_summary(&v).unwrap();
        let mut sorted = v.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // numpy-style linear interpolation: rank = p (n - 1)
        let oracle = |p: f64| {
            let r = p * 999.0;
            let f = r.floor();
            sorted[f as usize] * (1.0 - (r - f)) + sorted[(f as usize + 1).min(999)] * (r - f)
        };
        assert_abs_diff_eq!(s.p5, oracle(0.05), epsilon = 1e-6);
        assert_abs_diff_eq!(s.p50, oracle(0.50), epsilon = 1e-6);
        assert_abs_diff_eq!(s.p95, oracle(0.95), epsilon = 1e-6);
        assert_abs_diff_eq!(s.mean, v.iter().sum::<f64>() / 1000.0, epsilon = 1e-3);
    }

    #[test]
    fn rssi_cases() {
        assert_abs_diff_eq!(rssi_report(&[-60.0; 14], 1).unwrap()[0], -60.0, epsilon = 1e-9);
        let mut half = vec![-60.0; 7];
        half.extend([-70.0; 7]);
        let exact = 10.0 * ((1e-6 + 1e-7) / 2.0f64).log10();
        assert_abs_diff_eq!(rssi_report(&half, 1).unwrap()[0], exact, epsilon = 1e-9);
        assert_abs_diff_eq!(exact, -62.596, epsilon = 1e-3);
        assert_eq!(rssi_report(&[-60.0; 27], 1).unwrap().len(), 1);
        assert_eq!(rssi_report(&[-60.0; 28], 1).unwrap().len(), 2);
        assert!(rssi_report(&[-60.0; 14], 0).is_err());
        assert!(rssi_report(&[-60.0; 14], 6).is_err());
    }

    #[test]
    fn occupancy_cases() {
        assert_eq!(channel_occupancy(&[-90.0; 10], -80.0).unwrap(), 0.0);
        let mut v = vec![-90.0; 70];
        v.extend([-50.0; 30]);
        assert_eq!(channel_occupancy(&v, -80.0).unwrap(), 30.0);
        assert_eq!(channel_occupancy(&v, f64::NEG_INFINITY).unwrap(), 100.0);
        assert!(channel_occupancy(&[], -80.0).is_err());
    }

    #[test]
    fn outage_cases() {
        let ok = Some(SimDuration::from_ms(10));
        let late = Some(SimDuration::from_ms(60));
        let budget = SimDuration::from_ms(50);
        let good = vec![ok; 100];
        assert_eq!(voip_outage(&[good.clone(), good.clone()], budget, 0.02).unwrap(), 0.0);
        let mut bad = vec![ok; 95];
        bad.extend([late; 5]);
        let users = [good.clone(), good.clone(), good.clone(), bad];
        assert_eq!(voip_outage(&users, budget, 0.02).unwrap(), 0.25);
        assert_eq!(voip_outage(&[vec![None; 10], vec![None; 3]], budget, 0.02).unwrap(), 1.0);
        // exactly 2 % late is not outage
        let mut edge = vec![ok; 98];
        edge.extend([late; 2]);
        assert_eq!(voip_outage(&[edge], budget, 0.02).unwrap(), 0.0);
    }

    #[test]
    fn l1_samples_average_power_over_symbol() {
        let sym = SimDuration::from_ns(71_428);
        let p = dbm_to_mw(-60.0);
        // signal covers exactly the first symbol and half the second
        let arr = [(SimTime::ZERO, SimTime::ZERO + sym + SimDuration::from_ns(35_714), p)];
        let s = l1_rssi_samples(&arr, 0.0, SimTime::ZERO, 3);
        assert_abs_diff_eq!(s[0], -60.0, epsilon = 1e-3);
        assert_abs_diff_eq!(s[1], -60.0 - 10.0 * 2f64.log10(), epsilon = 1e-3);
        assert_eq!(s[2], f64::NEG_INFINITY);
        // 14 samples span exactly one millisecond
        let full = [(SimTime::ZERO, SimTime::from_ms(1), p)];
        let s = l1_rssi_samples(&full, 0.0, SimTime::ZERO, 15);
        assert!(s[..14].iter().all(|&x| (x + 60.0).abs() < 1e-9));
        assert_eq!(s[14], f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn regrouping_invariance(samples in proptest::collection::vec(-95.0f64..-30.0, 28..29)) {
            let two = rssi_report(&samples, 2).unwrap()[0];
            let one = rssi_report(&samples, 1).unwrap();
            let pair = (dbm_to_mw(one[0]) + dbm_to_mw(one[1])) / 2.0;
            prop_assert!((dbm_to_mw(two) - pair).abs() <= 1e-9 * pair.max(1e-12) + 1e-18);
        }

        #[test]
        fn occupancy_monotone_in_threshold(
            samples in proptest::collection::vec(-100.0f64..-20.0, 1..200),
            a in -110.0f64..-10.0,
            b in -110.0f64..-10.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(channel_occupancy(&samples, lo).unwrap() >= channel_occupancy(&samples, hi).unwrap());
        }

        #[test]
        fn percentiles_are_ordered(v in proptest::collection::vec(0.0f64..1e9, 1..100)) {
            let s = upt_summary(&v).unwrap();
            prop_assert!(s.p5 <= s.p50 && s.p50 <= s.p95);
        }
    }
}
