//! `microgrid-opt`: config-driven runner for the microgrid optimization
//! strategies.
//!
//! Two subcommands: `validate` checks a scenario file and lists every
//! constraint violation; `run` executes one and writes its artifacts.
//! Exit codes: 0 success, 1 usage or configuration failure, 2 infeasible
//! constraint set, 3 numerical breakdown.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ScenarioConfig;
use microgrid_core::error::Error;

#[derive(Parser)]
#[command(name = "microgrid-opt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and list every constraint violation.
    Validate {
        /// Scenario TOML file.
        config: PathBuf,
    },
    /// Run a scenario and write its artifacts.
    Run {
        /// Scenario TOML file.
        #[arg(long)]
        config: PathBuf,
        /// Artifact directory; overrides `output_dir` from the scenario.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use this seed instead of the scenario's.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Run this many copies with consecutive seeds, one thread each.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Suppress the per-run summary lines.
        #[arg(long)]
        quiet: bool,
    },
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) => 2,
        Error::Numerical(_) => 3,
        _ => 1,
    }
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, ExitCode> {
    match ScenarioConfig::from_toml_file(path) {
        Ok(cfg) => Ok(cfg),
        Err(msg) => {
            eprintln!("error: {msg}");
            Err(ExitCode::from(1))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => {
            let cfg = match load(&config) {
                Ok(cfg) => cfg,
                Err(code) => return code,
            };
            let errors = cfg.validate();
            for e in &errors {
                println!("{e}");
            }
            if errors.is_empty() {
                println!("ok: {}", config.display());
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Run {
            config,
            out,
            seed_override,
            jobs,
            quiet,
        } => {
            let cfg = match load(&config) {
                Ok(cfg) => cfg,
                Err(code) => return code,
            };
            let errors = cfg.validate();
            if !errors.is_empty() {
                for e in &errors {
                    eprintln!("{e}");
                }
                return ExitCode::from(1);
            }
            if jobs == 0 {
                eprintln!("error: --jobs must be at least 1");
                return ExitCode::from(1);
            }
            let out_root = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            let seed = seed_override.unwrap_or(cfg.seed);
            let mut worst = 0u8;
            for result in runner::run_jobs(&cfg, &out_root, seed, jobs) {
                match result {
                    Ok(summary) => {
                        if !quiet {
                            println!(
                                "{} seed {}: objective {:.6}, baseline {:.6}, improvement {:.2}% -> {}",
                                summary.strategy,
                                summary.seed,
                                summary.objective,
                                summary.baseline,
                                summary.improvement_percent,
                                summary.out_dir.display()
                            );
                        }
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        worst = worst.max(exit_code_for(&e));
                    }
                }
            }
            ExitCode::from(worst)
        }
    }
}
