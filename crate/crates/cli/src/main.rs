use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use srw_core::config::{parse_config, MobilityConfig};
use srw_core::experiment::{run_experiment, with_workers, workers_from_env, Subcommand};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Detect,
    MobileDetect,
    Cover,
    Stationary,
    Percolate,
    Trace,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Detect => Subcommand::Detect,
            Command::MobileDetect => Subcommand::MobileDetect,
            Command::Cover => Subcommand::Cover,
            Command::Stationary => Subcommand::Stationary,
            Command::Percolate => Subcommand::Percolate,
            Command::Trace => Subcommand::Trace,
        }
    }
}

/// Sedentary random waypoint experiments.
#[derive(Debug, Parser)]
#[command(name = "srw", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `reps` from the configuration.
    #[arg(long)]
    reps: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(cli: &Cli) -> Result<MobilityConfig, String> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text).map_err(|e| e.to_string())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = cli.reps {
        cfg.reps = reps;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.to_string_lossy().into_owned();
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("srw: config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let cmd = Subcommand::from(cli.command);
    let out = PathBuf::from(&cfg.output_dir);
    match with_workers(workers_from_env(), || run_experiment(&cfg, cmd, &out)).and_then(|r| r) {
        Ok(output) => {
            for (name, _) in &output.files {
                println!("{}", out.join(name).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("srw {cmd}: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
