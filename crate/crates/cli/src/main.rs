use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tab_core::ledger::{export_chain, import_chain, verify_chain, VerifyResult};
use tab_core::scenario::{
    emit_report, labels_for, run_scenario_with, scale_sweep, Labels, ReportFormat, RunOptions, ScenarioConfig,
    ScenarioReport,
};

/// Seed used when neither `--seed` nor the scenario file gives one.
const SEED_ENV: &str = "TAB_SEED";

#[derive(Parser)]
#[command(name = "tab", version, about = "Run and audit key-service scenarios on a simulated ledger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// 32-byte hex seed; overrides the scenario file.
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
        /// Also export the chain to this file.
        #[arg(long)]
        chain: Option<PathBuf>,
        /// Include wall-clock per phase (makes the report non-deterministic).
        #[arg(long)]
        timings: bool,
    },
    /// Check hash links, ordering, and integrity of an exported chain.
    VerifyChain {
        #[arg(long)]
        chain: PathBuf,
    },
    /// Rebuild a report from an exported chain alone.
    Report {
        #[arg(long)]
        chain: PathBuf,
        /// Scenario file used only to name entities.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
    },
    /// Time the scenario across data-owner counts.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long, value_delimiter = ',', default_value = "6,10")]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type CliResult = Result<bool, String>;

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), String> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(path: &Path, seed: Option<String>) -> Result<ScenarioConfig, String> {
    let mut config = ScenarioConfig::from_json(&read(path)?).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        config.seed = Some(s);
    } else if config.seed.is_none() {
        config.seed = std::env::var(SEED_ENV).ok();
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn print_outcome(report: &ScenarioReport) {
    for i in report.invariants.iter().filter(|i| !i.holds) {
        eprintln!("invariant violated: {} {}", i.name, i.detail);
    }
    for d in &report.outcome.expectation_diff {
        eprintln!("expectation mismatch: {d}");
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Run { config, seed, out, format, chain, timings } => {
            let config = load_config(&config, seed)?;
            let run = run_scenario_with(&config, RunOptions { timings }).map_err(|e| e.to_string())?;
            if let Some(path) = chain {
                std::fs::write(&path, export_chain(run.blocks())).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            write_out(out.as_deref(), &emit_report(&run.report, format).map_err(|e| e.to_string())?)?;
            print_outcome(&run.report);
            Ok(run.report.outcome.passed)
        }
        Command::VerifyChain { chain } => {
            let blocks = import_chain(&read(&chain)?).map_err(|e| e.to_string())?;
            match verify_chain(&blocks) {
                VerifyResult::Consistent => {
                    println!("consistent: {} blocks", blocks.len());
                    Ok(true)
                }
                VerifyResult::BrokenAt { index, reason } => {
                    println!("broken at block {index}: {reason}");
                    Ok(false)
                }
            }
        }
        Command::Report { chain, config, seed, out, format } => {
            let blocks = import_chain(&read(&chain)?).map_err(|e| e.to_string())?;
            let (name, seed, labels) = match config {
                Some(path) => {
                    let c = load_config(&path, seed)?;
                    let labels = labels_for(&c).map_err(|e| e.to_string())?;
                    (c.name.clone(), c.seed.clone().unwrap_or_default(), labels)
                }
                None => ("chain".to_string(), seed.unwrap_or_default(), Labels(Default::default())),
            };
            let report = ScenarioReport::from_chain(&name, &seed, &blocks, &labels).map_err(|e| e.to_string())?;
            write_out(out.as_deref(), &emit_report(&report, format).map_err(|e| e.to_string())?)?;
            print_outcome(&report);
            Ok(report.outcome.passed)
        }
        Command::Sweep { config, seed, counts, repeats, out } => {
            let config = load_config(&config, seed)?;
            let points = scale_sweep(&config, &counts, repeats).map_err(|e| e.to_string())?;
            let mut text = serde_json::to_string_pretty(&points).map_err(|e| e.to_string())?;
            text.push('\n');
            write_out(out.as_deref(), &text)?;
            Ok(points.iter().all(|p| p.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
