use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use msv_cli::config::{ExperimentConfig, Model};
use msv_cli::pipeline::{self, RunError, REPORT_JSON};
use msv_cli::report::ExperimentReport;
use msv_cli::validate::{self, Level};

#[derive(Parser)]
#[command(name = "msv", version, about = "Moment scaling experiments for jump-driven stochastic volatility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `simulation.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `simulation.workers`.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate increments and write increments.csv.
    Simulate(Common),
    /// Read increments.csv and write moments.csv and scaling.csv.
    Estimate(Common),
    /// Write the theoretical curve to theory.csv.
    Theory(Common),
    /// Run every stage and write all CSVs plus report.json.
    Report(Common),
    /// Run a validation suite.
    Validate {
        #[arg(long, value_enum, default_value = "quick")]
        level: Level,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

fn load(c: &Common) -> Result<(ExperimentConfig, Model), RunError> {
    let mut cfg = ExperimentConfig::read(&c.config)?;
    cfg.apply_overrides(c.seed, c.workers, c.out.as_deref());
    let model = cfg.validate()?;
    info!("config hash {}", cfg.hash());
    Ok((cfg, model))
}

/// `Ok(false)` when a verdict failed.
fn run(cli: Cli) -> Result<bool, RunError> {
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, model) = load(&c)?;
            let table = pipeline::with_pool(cfg.simulation.workers, || pipeline::simulate(&cfg, &model))?;
            pipeline::write_increments(&cfg.output.dir, &table)?;
            Ok(true)
        }
        Command::Estimate(c) => {
            let (cfg, model) = load(&c)?;
            let table = pipeline::read_increments(&cfg.output.dir, &cfg)?;
            let (moments, curve) =
                pipeline::with_pool(cfg.simulation.workers, || pipeline::estimate(&cfg, &model, &table))?;
            pipeline::write_estimates(&cfg.output.dir, &moments, &curve)?;
            Ok(true)
        }
        Command::Theory(c) => {
            let (cfg, model) = load(&c)?;
            if !pipeline::write_theory(&cfg.output.dir, &cfg, &model)? {
                println!("no closed-form scaling law for this drift: {}", model.theory_note.as_deref().unwrap_or("-"));
            }
            Ok(true)
        }
        Command::Report(c) => {
            let (cfg, model) = load(&c)?;
            let out = pipeline::run_stages(&cfg, &model)?;
            pipeline::write_artifacts(&cfg.output.dir, &cfg, &model, &out)?;
            let report = ExperimentReport::new(&cfg, &model, &out);
            let path = cfg.output.dir.join(REPORT_JSON);
            fs::write(&path, report.to_string_pretty() + "\n").map_err(|source| RunError::Io { path, source })?;
            for v in &report.verdicts {
                println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.check, v.detail);
            }
            Ok(report.passed())
        }
        Command::Validate { level, seed, workers } => {
            let results = validate::validate(level, seed, workers)?;
            for r in &results {
                println!("{}", r.line());
            }
            Ok(results.iter().all(|r| r.pass))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
