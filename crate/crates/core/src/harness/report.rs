use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::Technology;
use crate::traffic::{classify_load, LoadClass};

use super::config::ScenarioConfig;

pub const RESULTS_COLUMNS: [&str; 14] = [
    "replication",
    "step",
    "operator",
    "technology",
    "load_class",
    "mean_occupancy",
    "upt_mean_mbps",
    "upt_p5_mbps",
    "upt_p50_mbps",
    "upt_p95_mbps",
    "voip_outage",
    "channel_occupancy_pct",
    "files_completed",
    "files_dropped",
];

/// One `results.csv` row: one operator in one step of one replication.
/// Operators are numbered from 1; operator 1 is never replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub replication: u32,
    pub step: u8,
    pub operator: u8,
    pub technology: Technology,
    pub load_class: LoadClass,
    pub mean_occupancy: f64,
    pub upt_mean_mbps: Option<f64>,
    pub upt_p5_mbps: Option<f64>,
    pub upt_p50_mbps: Option<f64>,
    pub upt_p95_mbps: Option<f64>,
    pub voip_outage: Option<f64>,
    pub channel_occupancy_pct: f64,
    pub files_completed: u64,
    /// Files that did not complete by the horizon and are left out of UPT.
    pub files_dropped: u64,
}

#[derive(Debug, Clone)]
pub struct TraceSample {
    pub replication: u32,
    pub step: u8,
    pub jsonl: String,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub load: LoadClass,
    pub arrival_rate_per_s: f64,
    /// Seed of every replication, by index.
    pub seeds: Vec<u64>,
    pub rows: Vec<ResultRow>,
    pub traces: Vec<TraceSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepAggregate {
    pub step: u8,
    pub operator: u8,
    pub technology: Technology,
    pub replications: usize,
    pub mean_occupancy: f64,
    pub measured_load_class: LoadClass,
    /// Mean over replications of the per-replication mean UPT.
    pub upt_mean_mbps: Option<f64>,
    pub voip_outage: Option<f64>,
    pub channel_occupancy_pct: f64,
    pub files_completed: u64,
    pub files_dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub config: ScenarioConfig,
    pub load_class: LoadClass,
    pub arrival_rate_per_s: f64,
    pub replications: usize,
    pub seeds: Vec<u64>,
    pub steps: Vec<StepAggregate>,
    /// `(step2 - step1) / step1` of operator 1's mean UPT, by load class.
    pub upt_delta: BTreeMap<String, f64>,
    /// Per-replication operator-1 UPT ratios step2/step1, sorted.
    pub upt_ratio_distribution: Vec<f64>,
    pub upt_ratio_median: Option<f64>,
    /// Operator 1's VoIP outage, step 2 minus step 1.
    pub voip_outage_delta: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn median(sorted: &[f64]) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

impl RunReport {
    pub fn rows_for(&self, step: u8, operator: u8) -> impl Iterator<Item = &ResultRow> + '_ {
        self.rows
            .iter()
            .filter(move |r| r.step == step && r.operator == operator)
    }

    /// Per-replication ratio of operator 1's mean UPT, step 2 over step 1,
    /// for replications where both steps completed files.
    pub fn upt_ratios(&self) -> Vec<f64> {
        let s1: BTreeMap<u32, f64> = self
            .rows_for(1, 1)
            .filter_map(|r| Some((r.replication, r.upt_mean_mbps?)))
            .collect();
        let mut v: Vec<f64> = self
            .rows_for(2, 1)
            .filter_map(|r| Some(r.upt_mean_mbps? / s1.get(&r.replication)?))
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn summary(&self) -> Summary {
        let mut steps = Vec::new();
        for step in [1u8, 2] {
            for op in [1u8, 2] {
                let rows: Vec<&ResultRow> = self.rows_for(step, op).collect();
                let Some(first) = rows.first() else {
                    continue;
                };
                let occ = mean(rows.iter().map(|r| r.mean_occupancy)).unwrap_or(0.0);
                steps.push(StepAggregate {
                    step,
                    operator: op,
                    technology: first.technology,
                    replications: rows.len(),
                    mean_occupancy: occ,
                    measured_load_class: classify_load(occ),
                    upt_mean_mbps: mean(rows.iter().filter_map(|r| r.upt_mean_mbps)),
                    voip_outage: mean(rows.iter().filter_map(|r| r.voip_outage)),
                    channel_occupancy_pct: mean(rows.iter().map(|r| r.channel_occupancy_pct))
                        .unwrap_or(0.0),
                    files_completed: rows.iter().map(|r| r.files_completed).sum(),
                    files_dropped: rows.iter().map(|r| r.files_dropped).sum(),
                });
            }
        }
        let op1 = |step: u8| steps.iter().find(|a| a.step == step && a.operator == 1);
        let mut upt_delta = BTreeMap::new();
        if let (Some(Some(a)), Some(Some(b))) =
            (op1(1).map(|s| s.upt_mean_mbps), op1(2).map(|s| s.upt_mean_mbps))
        {
            upt_delta.insert(self.load.to_string(), (b - a) / a);
        }
        let voip_outage_delta = match (op1(1).and_then(|s| s.voip_outage), op1(2).and_then(|s| s.voip_outage)) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        };
        let ratios = self.upt_ratios();
        Summary {
            config: self.config.clone(),
            load_class: self.load,
            arrival_rate_per_s: self.arrival_rate_per_s,
            replications: self.seeds.len(),
            seeds: self.seeds.clone(),
            steps,
            upt_delta,
            upt_ratio_median: median(&ratios),
            upt_ratio_distribution: ratios,
            voip_outage_delta,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(RESULTS_COLUMNS)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: std::result::Result<Vec<ResultRow>, _> = r.deserialize().collect();
    Ok(rows?)
}

/// Writes `results.csv`, `summary.json` and, for traced runs, one
/// `trace_rep{r}_step{s}.jsonl` per replication and step. Returns the paths
/// written.
pub fn emit_results(report: &RunReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    let csv_path = out_dir.join("results.csv");
    write_results_csv(&report.rows, &csv_path)?;
    written.push(csv_path);
    let summary_path = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&report.summary())?;
    fs::write(&summary_path, json + "\n").map_err(io_err(&summary_path))?;
    written.push(summary_path);
    for t in &report.traces {
        let p = out_dir.join(format!("trace_rep{}_step{}.jsonl", t.replication, t.step));
        fs::write(&p, &t.jsonl).map_err(io_err(&p))?;
        written.push(p);
    }
    Ok(written)
}
