use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use decfl::bandit::{write_selection_trace, SelectionConfig};
use decfl::energy::{write_energy_trace, DeviceProfile};
use decfl::federation::{
    energy_records, selection_records, write_rounds_csv, Federation, FederationConfig, RoundRecord,
    RunSummary,
};
use decfl::models::UserData;

use crate::config::ExperimentConfig;
use crate::dataset;

pub fn profiles(cfg: &ExperimentConfig) -> Result<Vec<DeviceProfile>> {
    match &cfg.profiles {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Ok(DeviceProfile::load_all(&text)?)
        }
        None => Ok(DeviceProfile::presets()),
    }
}

pub fn federation_config(cfg: &ExperimentConfig) -> Result<FederationConfig> {
    Ok(FederationConfig {
        rounds: cfg.rounds,
        ttl_ms: cfg.ttl_ms,
        epsilon: cfg.epsilon,
        patience: 3,
        theta: cfg.theta,
        forget_interval: cfg.forget_interval,
        arrivals_per_round: cfg.arrivals_per_round,
        baseline: cfg.baseline,
        priority_weight: cfg.priority_weight,
        lru_theta: cfg.lru_theta,
        max_network_delay_ms: cfg.max_network_delay_ms,
        selection: SelectionConfig {
            m: cfg.m,
            weights: cfg.weights()?,
            min_fraction: cfg.min_fraction()?,
            beta: cfg.beta,
        },
        availability: cfg.availability()?,
        reward_weights: cfg.reward_weights,
        reward_normalizers: cfg.reward_normalizers,
        seed: cfg.seed,
    })
}

/// Federation over the training split, plus the held-out users.
pub fn build(cfg: &ExperimentConfig) -> Result<(Federation, Vec<UserData>)> {
    let data = dataset::load(cfg)?;
    let (train, holdout) = dataset::holdout_split(data.records, cfg.holdout, cfg.seed);
    let shards = dataset::worker_data(train, cfg.devices, cfg.initial_fraction, cfg.seed);
    let fed = Federation::new(
        federation_config(cfg)?,
        &data.template,
        profiles(cfg)?,
        shards,
    )?;
    Ok((fed, holdout))
}

pub struct RunOutcome {
    pub devices: usize,
    pub rounds: Vec<RoundRecord>,
    pub summary: RunSummary,
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let (mut fed, holdout) = build(cfg)?;
    let rounds = fed.run()?;
    let model = fed.server().model().as_ref().clone();
    let mut summary =
        RunSummary::from_rounds(cfg.baseline, &model, &rounds, fed.server().converged_at());
    summary.accuracy = dataset::evaluate(&model, &holdout, cfg.hit_k, cfg.seed)?;
    Ok(RunOutcome {
        devices: cfg.devices,
        rounds,
        summary,
    })
}

#[derive(Serialize)]
struct ConvergenceRow {
    k: u64,
    elapsed_ms: f64,
    elapsed_norm: f64,
    metric: Option<f64>,
    metric_norm: Option<f64>,
}

fn min_max(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn normalize(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

/// Cumulative simulated time and convergence metric per round, raw and
/// min-max normalized over the run.
pub fn write_convergence_csv(path: &Path, rounds: &[RoundRecord]) -> Result<()> {
    let mut elapsed = Vec::with_capacity(rounds.len());
    let mut t = 0.0;
    for r in rounds {
        t += r.duration_ms;
        elapsed.push(t);
    }
    let t_range = min_max(elapsed.iter().copied());
    let m_range = min_max(rounds.iter().filter_map(|r| r.metric));
    let mut w = csv::Writer::from_path(path)?;
    for (r, &e) in rounds.iter().zip(&elapsed) {
        w.serialize(ConvergenceRow {
            k: r.k,
            elapsed_ms: e,
            elapsed_norm: normalize(e, t_range),
            metric: r.metric,
            metric_norm: r.metric.map(|m| normalize(m, m_range)),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write(out_dir: &Path, outcome: &RunOutcome) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let rounds_path = out_dir.join("rounds.csv");
    write_rounds_csv(
        BufWriter::new(File::create(&rounds_path)?),
        outcome.devices,
        &outcome.rounds,
    )?;
    let selection_path = out_dir.join("selection.csv");
    write_selection_trace(
        BufWriter::new(File::create(&selection_path)?),
        &selection_records(outcome.devices, &outcome.rounds),
    )?;
    let energy_path = out_dir.join("energy.csv");
    write_energy_trace(
        BufWriter::new(File::create(&energy_path)?),
        &energy_records(&outcome.rounds),
    )?;
    let convergence_path = out_dir.join("convergence.csv");
    write_convergence_csv(&convergence_path, &outcome.rounds)?;
    let summary_path = out_dir.join("summary.json");
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&outcome.summary)? + "\n",
    )?;
    Ok(vec![
        rounds_path,
        selection_path,
        energy_path,
        convergence_path,
        summary_path,
    ])
}
