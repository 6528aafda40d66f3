use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use tde_cli::{cmd_analog, cmd_estimate, cmd_sweep, ExperimentConfig, RunSummary};

#[derive(Parser)]
#[command(name = "tde-ego", version, about = "Egomotion from event streams with TDE networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON). Optional for sweep and analog.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the network simulation.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Overrides stimulus and network placement seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Spike count and latency against FAC-TRG time difference.
    Sweep,
    /// Run a network on an event stream and estimate yaw rate.
    Estimate,
    /// Closed-form analog synapse checks.
    Analog,
}

fn run(cli: &Cli) -> Result<RunSummary> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if matches!(cli.command, Command::Estimate) => anyhow::bail!("estimate needs --config"),
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    config.resolve();
    let out = cli.out.clone().or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    config.output_dir = Some(out.clone());
    if cli.workers == 0 {
        anyhow::bail!("--workers must be at least 1");
    }
    match cli.command {
        Command::Sweep => cmd_sweep(&config, &out),
        Command::Estimate => cmd_estimate(&config, &out, cli.workers),
        Command::Analog => cmd_analog(&config, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            for m in &summary.messages {
                println!("{m}");
            }
            for (name, ok) in &summary.checks {
                println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
            }
            for p in &summary.outputs {
                println!("wrote {}", p.display());
            }
            if summary.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
