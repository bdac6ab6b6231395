use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use coexist_core::harness::{
    calibrate_load, emit_results, run_steps, RunOptions, ScenarioConfig, StepSelection,
};
use coexist_core::traffic::LoadClass;

#[derive(Parser)]
#[command(name = "coexist-sim", version, about = "LAA / Wi-Fi coexistence simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replications of step 1, step 2 or both and write result files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Master seed; overrides the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<u32>,
        #[arg(long, value_enum)]
        load: Load,
        #[arg(long, value_enum, default_value = "both")]
        step: Step,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-replication event logs.
        #[arg(long)]
        trace: bool,
    },
    /// Parse and check a config file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Search for the arrival rate that puts step-1 operator 1 in a load band.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        load: Load,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Load {
    Low,
    Medium,
    High,
}

impl From<Load> for LoadClass {
    fn from(l: Load) -> Self {
        match l {
            Load::Low => LoadClass::Low,
            Load::Medium => LoadClass::Medium,
            Load::High => LoadClass::High,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Step {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

fn load_config(path: &Path) -> anyhow::Result<ScenarioConfig> {
    let cfg = ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    cfg.validate()
        .with_context(|| format!("invalid config {}", path.display()))?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            replications,
            load,
            step,
            out,
            trace,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(n) = replications {
                cfg.replications = n;
            }
            let steps = match step {
                Step::One => StepSelection::Step1,
                Step::Two => StepSelection::Step2,
                Step::Both => StepSelection::Both,
            };
            let report = run_steps(
                &cfg,
                RunOptions {
                    load: load.into(),
                    steps,
                    trace,
                },
            )?;
            let files = emit_results(&report, &out)?;
            let summary = report.summary();
            for a in &summary.steps {
                println!(
                    "step {} op {} {:<5} occupancy {:.3} ({}) upt {}",
                    a.step,
                    a.operator,
                    a.technology.as_str(),
                    a.mean_occupancy,
                    a.measured_load_class,
                    a.upt_mean_mbps
                        .map(|u| format!("{u:.2} Mbps"))
                        .unwrap_or_else(|| "-".into()),
                );
            }
            if let Some(m) = summary.upt_ratio_median {
                println!("median op1 UPT ratio step2/step1: {m:.3}");
            }
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            println!(
                "{}: ok ({} replications, {} ms, seed {})",
                config.display(),
                cfg.replications,
                cfg.duration_ms,
                cfg.master_seed
            );
        }
        Command::Calibrate { config, load } => {
            let cfg = load_config(&config)?;
            let c = calibrate_load(load.into(), &cfg)?;
            for (rate, occ) in &c.evaluations {
                eprintln!("  rate {rate:.4}/s -> occupancy {occ:.3}");
            }
            println!(
                "{}: arrival_rate_per_s = {:.4} (occupancy {:.3})",
                c.load, c.arrival_rate_per_s, c.occupancy
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
