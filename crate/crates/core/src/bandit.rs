//! Worker selection as a combinatorial bandit.
//!
//! Each round the server sees the available set `G(k)` and picks at most `m`
//! devices by the score
//!
//! ```text
//! score_i = g_i · min(μ̂_i + sqrt(3 ln k / (2 c_i)), 1) + β · Z_i
//! ```
//!
//! where `Z_i` is a virtual queue that grows by `r_i` every round and drains
//! by one whenever `i` is selected. Because the score is additive over the
//! selected set and non-negative, taking the top `m` solves the per-round
//! oracle exactly.

use std::collections::BTreeSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ModelError};

/// Truncated mean estimate `min(μ̂ + sqrt(3 ln k / 2c), 1)`; 1 when `c = 0`
/// or `k = 0`.
pub fn truncated_ucb(mu_hat: f64, count: u64, round: f64) -> f64 {
    if count == 0 || round <= 0.0 {
        return 1.0;
    }
    let bonus = (3.0 * round.ln().max(0.0) / (2.0 * count as f64)).sqrt();
    (mu_hat + bonus).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Maximum group size per round.
    pub m: usize,
    /// Positive per-device reward weights.
    pub weights: Vec<f64>,
    /// Minimum long-run selection fractions in `[0, 1)`.
    pub min_fraction: Vec<f64>,
    /// Fairness weight on the virtual queues.
    pub beta: f64,
}

impl SelectionConfig {
    /// Unit weights, no fraction constraints.
    pub fn uniform(devices: usize, m: usize) -> Self {
        Self {
            m,
            weights: vec![1.0; devices],
            min_fraction: vec![0.0; devices],
            beta: 0.05,
        }
    }

    pub fn devices(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.devices();
        if n == 0 {
            return Err(ConfigError::new("weights", "at least one device required"));
        }
        if self.m == 0 || self.m > n {
            return Err(ConfigError::new(
                "m",
                format!("must be in 1..={n}, got {}", self.m),
            ));
        }
        if let Some(g) = self.weights.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(ConfigError::new(
                "weights",
                format!("weights must be positive, got {g}"),
            ));
        }
        if self.min_fraction.len() != n {
            return Err(ConfigError::new(
                "min_fraction",
                format!("expected {n} entries, got {}", self.min_fraction.len()),
            ));
        }
        if let Some(r) = self.min_fraction.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(ConfigError::new(
                "min_fraction",
                format!("fractions must lie in [0, 1), got {r}"),
            ));
        }
        let total: f64 = self.min_fraction.iter().sum();
        if total > self.m as f64 {
            return Err(ConfigError::new(
                "min_fraction",
                format!("infeasible: fractions sum to {total} > m = {}", self.m),
            ));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(ConfigError::new(
                "beta",
                format!("must be non-negative, got {}", self.beta),
            ));
        }
        Ok(())
    }
}

/// Per-device reward statistics and fairness queues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    round: u64,
    counts: Vec<u64>,
    reward_sums: Vec<f64>,
    queues: Vec<f64>,
}

impl BanditState {
    pub fn new(devices: usize) -> Self {
        Self {
            round: 0,
            counts: vec![0; devices],
            reward_sums: vec![0.0; devices],
            queues: vec![0.0; devices],
        }
    }

    pub fn devices(&self) -> usize {
        self.counts.len()
    }

    /// Number of completed rounds.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn count(&self, device: usize) -> u64 {
        self.counts[device]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn queue(&self, device: usize) -> f64 {
        self.queues[device]
    }

    /// Empirical mean reward; 1 before the first selection.
    pub fn mu_hat(&self, device: usize) -> f64 {
        match self.counts[device] {
            0 => 1.0,
            c => self.reward_sums[device] / c as f64,
        }
    }

    pub fn ucb_estimate(&self, device: usize, k: u64) -> f64 {
        truncated_ucb(self.mu_hat(device), self.counts[device], k as f64)
    }

    fn score(&self, device: usize, cfg: &SelectionConfig, k: u64) -> f64 {
        cfg.weights[device] * self.ucb_estimate(device, k) + cfg.beta * self.queues[device]
    }

    /// Top-`m` available devices by score, ties to the lower index.
    /// Returned in ascending index order.
    pub fn select(&self, available: &BTreeSet<usize>, cfg: &SelectionConfig, k: u64) -> Vec<usize> {
        let mut scored: Vec<(usize, f64)> = available
            .iter()
            .filter(|&&i| i < self.devices())
            .map(|&i| (i, self.score(i, cfg, k)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(cfg.m);
        let mut out: Vec<usize> = scored.into_iter().map(|(i, _)| i).collect();
        out.sort_unstable();
        out
    }

    /// Records the round's rewards (aligned with `selected`) and advances
    /// every queue. Returns `Q(k) = Σ g_i X_i`.
    pub fn observe(
        &mut self,
        selected: &[usize],
        rewards: &[f64],
        cfg: &SelectionConfig,
    ) -> Result<f64, ModelError> {
        if selected.len() != rewards.len() {
            return Err(ModelError::InputDomain(format!(
                "{} rewards for {} selected devices",
                rewards.len(),
                selected.len()
            )));
        }
        for (&i, &x) in selected.iter().zip(rewards) {
            if i >= self.devices() {
                return Err(ModelError::InputDomain(format!("device {i} out of range")));
            }
            if !(0.0..=1.0).contains(&x) {
                return Err(ModelError::InputDomain(format!(
                    "reward {x} for device {i} outside [0, 1]"
                )));
            }
        }
        let mut q = 0.0;
        let mut chosen = vec![false; self.devices()];
        for (&i, &x) in selected.iter().zip(rewards) {
            self.counts[i] += 1;
            self.reward_sums[i] += x;
            chosen[i] = true;
            q += cfg.weights[i] * x;
        }
        for (i, z) in self.queues.iter_mut().enumerate() {
            let b = if chosen[i] { 1.0 } else { 0.0 };
            *z = (*z + cfg.min_fraction[i] - b).max(0.0);
        }
        self.round += 1;
        Ok(q)
    }
}

/// Independent per-device Bernoulli availability.
#[derive(Debug, Clone)]
pub struct AvailabilityModel {
    probs: Vec<f64>,
    rng: ChaCha8Rng,
}

impl AvailabilityModel {
    pub fn new(probs: Vec<f64>, seed: u64) -> Result<Self, ConfigError> {
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ConfigError::new(
                "availability",
                format!("probability {p} outside [0, 1]"),
            ));
        }
        Ok(Self {
            probs,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// One draw of `G(k)`. Consumes exactly one variate per device.
    pub fn draw(&mut self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for (i, &p) in self.probs.iter().enumerate() {
            let u: f64 = self.rng.gen();
            if u < p {
                out.insert(i);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub volume: f64,
    pub time: f64,
    pub energy: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            volume: 1.0 / 3.0,
            time: 1.0 / 3.0,
            energy: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardNormalizers {
    pub volume: f64,
    pub time_ms: f64,
    pub energy: f64,
}

impl Default for RewardNormalizers {
    fn default() -> Self {
        Self {
            volume: 10.0,
            time_ms: 1000.0,
            energy: 10.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let sum = self.volume + self.time + self.energy;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ConfigError::new(
                "reward_weights",
                format!("weights must sum to 1, got {sum}"),
            ));
        }
        if self.volume < 0.0 || self.time < 0.0 || self.energy < 0.0 {
            return Err(ConfigError::new(
                "reward_weights",
                "weights must be non-negative",
            ));
        }
        Ok(())
    }
}

impl RewardNormalizers {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("volume", self.volume),
            ("time_ms", self.time_ms),
            ("energy", self.energy),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::new(
                    "reward_normalizers",
                    format!("{name} must be positive, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// Reward in `[0, 1]` favouring large data volume, short time, low energy.
pub fn composite_reward(
    time_ms: f64,
    energy: f64,
    volume: f64,
    weights: &RewardWeights,
    norms: &RewardNormalizers,
) -> Result<f64, ConfigError> {
    weights.validate()?;
    norms.validate()?;
    let v = (volume / norms.volume).clamp(0.0, 1.0);
    let t = 1.0 - (time_ms / norms.time_ms).clamp(0.0, 1.0);
    let e = 1.0 - (energy / norms.energy).clamp(0.0, 1.0);
    Ok((weights.volume * v + weights.time * t + weights.energy * e).clamp(0.0, 1.0))
}

/// One row of the selection trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub k: u64,
    pub available: Vec<bool>,
    pub selected: Vec<bool>,
    /// Estimates used for the selection.
    pub estimates: Vec<f64>,
    pub q: f64,
}

pub(crate) fn mask(set: impl IntoIterator<Item = usize>, n: usize) -> Vec<bool> {
    let mut out = vec![false; n];
    for i in set {
        out[i] = true;
    }
    out
}

pub fn mask_string(mask: &[bool]) -> String {
    mask.iter().map(|b| if *b { '1' } else { '0' }).collect()
}

pub fn write_selection_trace<W: Write>(out: W, records: &[SelectionRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = records.first().map_or(0, |r| r.estimates.len());
    let mut header = vec!["k".to_string(), "available".into(), "selected".into()];
    header.extend((0..n).map(|i| format!("ucb_{i}")));
    header.push("q".into());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.k.to_string(),
            mask_string(&r.available),
            mask_string(&r.selected),
        ];
        row.extend(r.estimates.iter().map(|e| e.to_string()));
        row.push(r.q.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Bandit-only simulation with Bernoulli rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliInstance {
    pub means: Vec<f64>,
    pub availability: Vec<f64>,
    pub rounds: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    pub average_q: f64,
    pub fractions: Vec<f64>,
    pub state: BanditState,
    pub trace: Vec<SelectionRecord>,
}

/// Runs `instance.rounds` rounds. Availability and rewards come from
/// separate streams derived from `seed`.
pub fn simulate_bernoulli(
    instance: &BernoulliInstance,
    cfg: &SelectionConfig,
    seed: u64,
    keep_trace: bool,
) -> Result<SimulationOutcome, ConfigError> {
    cfg.validate()?;
    let n = cfg.devices();
    if instance.means.len() != n {
        return Err(ConfigError::new("means", format!("expected {n} entries")));
    }
    if let Some(p) = instance.means.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(ConfigError::new(
            "means",
            format!("mean {p} outside [0, 1]"),
        ));
    }
    let mut availability = AvailabilityModel::new(instance.availability.clone(), seed)?;
    let mut rewards_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut state = BanditState::new(n);
    let mut total_q = 0.0;
    let mut trace = Vec::new();
    for k in 0..instance.rounds {
        let available = availability.draw();
        let selected = state.select(&available, cfg, k);
        let rewards: Vec<f64> = selected
            .iter()
            .map(|&i| {
                if rewards_rng.gen::<f64>() < instance.means[i] {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let estimates: Vec<f64> = if keep_trace {
            (0..n).map(|i| state.ucb_estimate(i, k)).collect()
        } else {
            Vec::new()
        };
        let q = state
            .observe(&selected, &rewards, cfg)
            .expect("simulated rewards are in range");
        total_q += q;
        if keep_trace {
            trace.push(SelectionRecord {
                k,
                available: mask(available.iter().copied(), n),
                selected: mask(selected.iter().copied(), n),
                estimates,
                q,
            });
        }
    }
    let rounds = instance.rounds.max(1) as f64;
    Ok(SimulationOutcome {
        average_q: total_q / rounds,
        fractions: state.counts().iter().map(|&c| c as f64 / rounds).collect(),
        state,
        trace,
    })
}

/// Expected `Q` of the best fixed subset of size `m` under full availability.
pub fn clairvoyant_mean(means: &[f64], weights: &[f64], m: usize) -> f64 {
    let mut values: Vec<f64> = means.iter().zip(weights).map(|(mu, g)| mu * g).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values.iter().take(m).sum()
}
