use crate::error::{Error, Result};
use crate::medium::Technology;
use crate::metrics::{upt_summary, voip_outage};
use crate::sim_core::derive_u64;
use crate::traffic::LoadClass;

use super::config::ScenarioConfig;
use super::engine::{simulate, SimOutput};
use super::report::{ResultRow, RunReport, TraceSample};

/// Which steps of the two-step methodology to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepSelection {
    Step1,
    Step2,
    Both,
}

impl StepSelection {
    pub fn steps(self) -> &'static [u8] {
        match self {
            StepSelection::Step1 => &[1],
            StepSelection::Step2 => &[2],
            StepSelection::Both => &[1, 2],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub load: LoadClass,
    pub steps: StepSelection,
    /// Keep every replication's event log for the report.
    pub trace: bool,
}

pub fn replication_seed(master_seed: u64, replication: u32) -> u64 {
    derive_u64(master_seed, &format!("replication.{replication}"))
}

pub fn step_technologies(cfg: &ScenarioConfig, step: u8) -> [Technology; 2] {
    if step == 1 {
        cfg.steps.step1
    } else {
        cfg.steps.step2
    }
}

/// Step 1 (Wi-Fi + Wi-Fi) and step 2 (operator 2 replaced) over
/// `cfg.replications` paired replications at the configured arrival rate
/// for `load`.
pub fn run_two_step(cfg: &ScenarioConfig, load: LoadClass) -> Result<RunReport> {
    run_steps(
        cfg,
        RunOptions {
            load,
            steps: StepSelection::Both,
            trace: false,
        },
    )
}

pub fn run_steps(cfg: &ScenarioConfig, opts: RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let rate = cfg.traffic.arrival_rate_per_s.get(opts.load)?;
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut seeds = Vec::new();
    for r in 0..cfg.replications {
        let seed = replication_seed(cfg.master_seed, r);
        seeds.push(seed);
        for &step in opts.steps.steps() {
            let out = simulate(cfg, step_technologies(cfg, step), seed, rate)?;
            rows.extend(result_rows(cfg, &out, r, step, opts.load)?);
            if opts.trace {
                traces.push(TraceSample {
                    replication: r,
                    step,
                    jsonl: out.trace_jsonl()?,
                });
            }
        }
    }
    Ok(RunReport {
        config: cfg.clone(),
        load: opts.load,
        arrival_rate_per_s: rate,
        seeds,
        rows,
        traces,
    })
}

/// One row per operator of a finished step.
pub fn result_rows(
    cfg: &ScenarioConfig,
    out: &SimOutput,
    replication: u32,
    step: u8,
    load: LoadClass,
) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::with_capacity(2);
    for (op, stats) in out.ops.iter().enumerate() {
        let upt = upt_summary(&out.upt_values(op)).ok();
        let outage = match &cfg.traffic.voip {
            Some(v) if !stats.voip_delays.is_empty() => Some(voip_outage(
                &stats.voip_delays,
                v.budget(),
                cfg.metrics.voip_late_fraction,
            )?),
            _ => None,
        };
        rows.push(ResultRow {
            replication,
            step,
            operator: op as u8 + 1,
            technology: out.techs[op],
            load_class: load,
            mean_occupancy: stats.mean_occupancy,
            upt_mean_mbps: upt.map(|u| u.mean / 1e6),
            upt_p5_mbps: upt.map(|u| u.p5 / 1e6),
            upt_p50_mbps: upt.map(|u| u.p50 / 1e6),
            upt_p95_mbps: upt.map(|u| u.p95 / 1e6),
            voip_outage: outage,
            channel_occupancy_pct: stats.channel_occupancy_pct,
            files_completed: stats.files.len() as u64,
            files_dropped: stats.files_dropped + stats.files_pending,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub load: LoadClass,
    pub arrival_rate_per_s: f64,
    pub occupancy: f64,
    /// Every `(rate, occupancy)` evaluated, in order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Mean step-1 buffer occupancy of operator 1 at `rate`, over the
/// calibration replications.
pub fn step1_occupancy(cfg: &ScenarioConfig, rate: f64) -> Result<f64> {
    let mut c = cfg.clone();
    c.duration_ms = cfg.calibration.duration_ms;
    let n = cfg.calibration.replications;
    let mut sum = 0.0;
    for r in 0..n {
        let out = simulate(&c, c.steps.step1, replication_seed(c.master_seed, r), rate)?;
        sum += out.ops[0].mean_occupancy;
    }
    Ok(sum / n as f64)
}

/// Finds an arrival rate whose step-1 operator-1 occupancy lies in the
/// target band, by bisection on a log scale.
pub fn calibrate_load(target: LoadClass, cfg: &ScenarioConfig) -> Result<Calibration> {
    calibrate_with(target, cfg, |rate| step1_occupancy(cfg, rate))
}

/// [`calibrate_load`] against an arbitrary occupancy map.
pub fn calibrate_with<F>(target: LoadClass, cfg: &ScenarioConfig, mut occ: F) -> Result<Calibration>
where
    F: FnMut(f64) -> Result<f64>,
{
    cfg.validate()?;
    let (band_lo, band_hi) = target
        .band()
        .ok_or_else(|| Error::InvalidInput("cannot calibrate to out_of_band".into()))?;
    let cal = &cfg.calibration;
    let mut evaluations = Vec::new();
    let mut eval = |rate: f64, evals: &mut Vec<(f64, f64)>| -> Result<f64> {
        let o = occ(rate)?;
        evals.push((rate, o));
        Ok(o)
    };
    let found = |rate, o, evaluations| Calibration {
        load: target,
        arrival_rate_per_s: rate,
        occupancy: o,
        evaluations,
    };
    let (mut lo, mut hi) = (cal.min_rate_per_s, cal.max_rate_per_s);
    let mut occ_lo = eval(lo, &mut evaluations)?;
    let mut occ_hi = eval(hi, &mut evaluations)?;
    let fail = |lo, occ_lo, hi, occ_hi| Error::Calibration {
        band_lo,
        band_hi,
        rate_lo: lo,
        occ_lo,
        rate_hi: hi,
        occ_hi,
    };
    if (band_lo..=band_hi).contains(&occ_lo) {
        return Ok(found(lo, occ_lo, evaluations));
    }
    if (band_lo..=band_hi).contains(&occ_hi) {
        return Ok(found(hi, occ_hi, evaluations));
    }
    if occ_lo > band_hi || occ_hi < band_lo {
        return Err(fail(lo, occ_lo, hi, occ_hi));
    }
    for _ in 0..cal.max_iterations {
        let mid = (lo * hi).sqrt();
        let o = eval(mid, &mut evaluations)?;
        if (band_lo..=band_hi).contains(&o) {
            return Ok(found(mid, o, evaluations));
        }
        if o < band_lo {
            lo = mid;
            occ_lo = o;
        } else {
            hi = mid;
            occ_hi = o;
        }
    }
    Err(fail(lo, occ_lo, hi, occ_hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisection_on_monotone_map_terminates_in_band() {
        let cfg = ScenarioConfig::default();
        for target in [LoadClass::Low, LoadClass::Medium, LoadClass::High] {
            let c = calibrate_with(target, &cfg, |r| Ok(1.0 - (-r / 2.0f64).exp())).unwrap();
            let (lo, hi) = target.band().unwrap();
            assert!((lo..=hi).contains(&c.occupancy));
            assert_eq!(c.evaluations.last().unwrap().1, c.occupancy);
        }
    }

    #[test]
    fn unreachable_band_reports_bracket() {
        let cfg = ScenarioConfig::default();
        // saturated everywhere
        let err = calibrate_with(LoadClass::Low, &cfg, |_| Ok(0.95)).unwrap_err();
        match err {
            Error::Calibration { occ_lo, occ_hi, rate_lo, rate_hi, .. } => {
                assert_eq!((occ_lo, occ_hi), (0.95, 0.95));
                assert_eq!((rate_lo, rate_hi), (0.01, 20.0));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn step_cycle_without_band_hit_fails() {
        let cfg = ScenarioConfig::default();
        // jumps straight across the medium band
        let err = calibrate_with(LoadClass::Medium, &cfg, |r| Ok(if r < 1.0 { 0.1 } else { 0.9 }))
            .unwrap_err();
        assert!(matches!(err, Error::Calibration { .. }));
    }

    #[test]
    fn replication_seeds_differ() {
        assert_ne!(replication_seed(1, 0), replication_seed(1, 1));
        assert_eq!(replication_seed(7, 3), replication_seed(7, 3));
    }
}
