use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use decfl::federation::Baseline;
use decfl_harness::config::{ExperimentConfig, Mode};
use decfl_harness::run_experiment;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Run,
    Bench,
    Attack,
    SelectSim,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BaselineArg {
    Deal,
    Original,
    Newfl,
}

/// Decremental federated learning simulator.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Args {
    /// Experiment to execute.
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment configuration; defaults apply to absent fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured training strategy.
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let loaded = match &args.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    };
    let mut cfg = match loaded {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    cfg.mode = match args.command {
        Command::Run => Mode::Run,
        Command::Bench => Mode::Bench,
        Command::Attack => Mode::Attack,
        Command::SelectSim => Mode::SelectSim,
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if let Some(b) = args.baseline {
        cfg.baseline = match b {
            BaselineArg::Deal => Baseline::Deal,
            BaselineArg::Original => Baseline::Original,
            BaselineArg::Newfl => Baseline::Newfl,
        };
    }
    match run_experiment(&cfg) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
