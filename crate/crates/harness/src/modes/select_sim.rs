use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use decfl::bandit::{
    clairvoyant_mean, simulate_bernoulli, write_selection_trace, BernoulliInstance,
    SelectionConfig, SimulationOutcome,
};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectSummary {
    pub rounds: u64,
    pub means: Vec<f64>,
    pub average_q: f64,
    pub clairvoyant: f64,
    pub ratio: f64,
    pub fractions: Vec<f64>,
}

pub fn select_sim(cfg: &ExperimentConfig) -> Result<(SelectSummary, SimulationOutcome)> {
    let means = if cfg.select_sim.means.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        (0..cfg.devices).map(|_| rng.gen_range(0.1..0.9)).collect()
    } else {
        cfg.select_sim.means.clone()
    };
    let selection = SelectionConfig {
        m: cfg.m,
        weights: cfg.weights()?,
        min_fraction: cfg.min_fraction()?,
        beta: cfg.beta,
    };
    let instance = BernoulliInstance {
        means: means.clone(),
        availability: cfg.availability()?,
        rounds: cfg.select_sim.rounds,
    };
    let out = simulate_bernoulli(&instance, &selection, cfg.seed, true)?;
    let clairvoyant = clairvoyant_mean(&means, &selection.weights, cfg.m);
    let summary = SelectSummary {
        rounds: instance.rounds,
        means,
        average_q: out.average_q,
        clairvoyant,
        ratio: out.average_q / clairvoyant,
        fractions: out.fractions.clone(),
    };
    Ok((summary, out))
}

pub fn write(
    out_dir: &Path,
    summary: &SelectSummary,
    out: &SimulationOutcome,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let trace = out_dir.join("selection.csv");
    write_selection_trace(BufWriter::new(File::create(&trace)?), &out.trace)?;
    let path = out_dir.join("select_summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(summary)? + "\n")?;
    Ok(vec![trace, path])
}
