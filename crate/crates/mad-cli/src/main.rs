//! Batch front end: scenario configuration, synthetic data generation,
//! tensor computation, validation suites and inversion.
//!
//! Exit codes: 0 success, 1 validation/acceptance failure, 2 configuration
//! error, 3 numerical failure.

mod commands;
mod config;
mod report;

use clap::{Parser, Subcommand};
use commands::CommandIo;
use config::RunConfig;
use mad_core::CoreError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mad", version, about = "magnetostatic anomaly detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute polarization tensors per anomaly (with ball closed-form check)
    Tensors {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Generate measurement samples (CSV) from the forward model
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Recover anomalies from a samples file
    Invert {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Run a named validation suite: np | tensors | asymptotic | harmonics | inversion
    Validate {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(core) = err.downcast_ref::<CoreError>() {
        match core {
            CoreError::ResolventSingular { .. }
            | CoreError::NoConvergentStart(_)
            | CoreError::RankDeficientFit { .. }
            | CoreError::Unidentifiable
            | CoreError::MomentVanishes
            | CoreError::ShapeAssumption => 3,
            _ => 2,
        }
    } else {
        2
    }
}

fn load_config(path: &PathBuf, seed_override: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = seed_override {
        cfg.measurement.noise.seed = seed;
        cfg.inversion.seed = seed.wrapping_add(1);
    }
    Ok(cfg)
}

fn io_for(cfg: Option<&RunConfig>, out: Option<PathBuf>) -> CommandIo {
    let dir = out.unwrap_or_else(|| {
        PathBuf::from(
            cfg.map(|c| c.output.dir.clone())
                .unwrap_or_else(|| ".".into()),
        )
    });
    CommandIo { out_dir: dir }
}

fn run() -> anyhow::Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Tensors {
            config,
            out,
            seed_override,
        } => {
            let cfg = load_config(&config, seed_override)?;
            let io = io_for(Some(&cfg), out);
            commands::cmd_tensors(cfg, &io)
        }
        Command::Simulate {
            config,
            out,
            seed_override,
        } => {
            let cfg = load_config(&config, seed_override)?;
            let io = io_for(Some(&cfg), out);
            commands::cmd_simulate(cfg, &io)
        }
        Command::Invert {
            config,
            samples,
            out,
            seed_override,
        } => {
            let cfg = load_config(&config, seed_override)?;
            let io = io_for(Some(&cfg), out);
            commands::cmd_invert(cfg, &samples, &io)
        }
        Command::Validate { suite, out } => {
            let io = io_for(None, out);
            commands::cmd_validate(&suite, &io)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
