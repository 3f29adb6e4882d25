//! Experiment runner: end-to-end federated runs, unlearning benchmarks,
//! recovery-attack demos and bandit-only simulations.

// Range checks are written `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod modes;

use std::path::PathBuf;

use anyhow::Result;

use config::{ExperimentConfig, Mode};

/// Executes the configured mode and returns the files written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    match cfg.mode {
        Mode::Run => modes::run::write(out, &modes::run::run(cfg)?),
        Mode::Bench => modes::bench::write(out, &modes::bench::bench(cfg)?),
        Mode::Attack => modes::attack::write(out, &modes::attack::attack(cfg)?),
        Mode::SelectSim => {
            let (summary, sim) = modes::select_sim::select_sim(cfg)?;
            modes::select_sim::write(out, &summary, &sim)
        }
    }
}
