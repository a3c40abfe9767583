//! `vgpencr`: fit, cross-validate, predict, simulate and benchmark grouped
//! horseshoe regressions with credible-region sparsification.

mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{RunConfig, ScenarioArg};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const MIN_SUCCESS_RATE: f64 = 0.9;

#[derive(Debug, Parser)]
#[command(name = "vgpencr", version, about)]
struct Cli {
    /// Flat JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit, sparsify and write a model JSON.
    Fit(Flags),
    /// Write the cross-validation curve as CSV.
    Cv(Flags),
    /// Predict from a model JSON for rows of raw predictors.
    Predict(Flags),
    /// Write train/test CSVs, groups and truth for a simulation scenario.
    Simulate(ScenarioFlags),
    /// Run seeded replications of a scenario and write metric CSVs.
    Bench(ScenarioFlags),
}

#[derive(Debug, clap::Args)]
struct Flags {
    #[command(flatten)]
    run: RunConfig,
}

#[derive(Debug, clap::Args)]
struct ScenarioFlags {
    #[arg(value_enum)]
    scenario_name: Option<ScenarioArg>,
    #[command(flatten)]
    run: RunConfig,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.downcast_ref::<vgpencr::Error>().is_some()) {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

fn resolve(file: Option<&PathBuf>, flags: RunConfig) -> anyhow::Result<RunConfig> {
    let base = match file {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let cfg = base.overlay(flags);
    cfg.validate()?;
    Ok(cfg)
}

fn global_threads(cfg: &RunConfig) {
    if let Some(t) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let file = cli.config.as_ref();
    match cli.command {
        Command::Fit(f) => {
            let cfg = resolve(file, f.run)?;
            global_threads(&cfg);
            commands::fit(&cfg)?;
        }
        Command::Cv(f) => {
            let cfg = resolve(file, f.run)?;
            global_threads(&cfg);
            commands::cv(&cfg)?;
        }
        Command::Predict(f) => commands::predict(&resolve(file, f.run)?)?,
        Command::Simulate(f) => {
            let mut run = f.run;
            run.scenario = run.scenario.or(f.scenario_name);
            commands::simulate(&resolve(file, run)?)?;
        }
        Command::Bench(f) => {
            let mut run = f.run;
            run.scenario = run.scenario.or(f.scenario_name);
            let rate = commands::bench(&resolve(file, run)?)?;
            if rate < MIN_SUCCESS_RATE {
                eprintln!("error: only {:.0}% of replications succeeded", 100.0 * rate);
                return Ok(EXIT_NUMERICAL);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
