//! Indoor scenario, two-step coexistence runs, load calibration and
//! result files.

mod config;
mod engine;
mod report;
mod run;
mod topology;

pub use config::{
    ArrivalRates, CalibrationConfig, LaaConfig, MetricsConfig, ScenarioConfig, ScenarioKind,
    StepTechnologies, TrafficConfig, SCHEMA_VERSION,
};
pub use engine::{
    simulate, BurstRecord, OperatorStats, SimOutput, TraceRecord, TxGate, TxRecord,
};
pub use report::{
    emit_results, median, read_results_csv, write_results_csv, ResultRow, RunReport,
    StepAggregate, Summary, TraceSample, RESULTS_COLUMNS,
};
pub use run::{
    calibrate_load, calibrate_with, replication_seed, result_rows, run_steps, run_two_step,
    step1_occupancy, step_technologies, Calibration, RunOptions, StepSelection,
};
pub use topology::{build_indoor_topology, Topology};
