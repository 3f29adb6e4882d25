//! Round-based orchestration of a server and simulated workers.
//!
//! A round draws the available set, selects workers with the bandit,
//! publishes the current model, runs each selected worker's local step and
//! merges the deltas of the workers that answered in time. Aggregation
//! fires on the response that completes a strict majority of the selected
//! set, or at the TTL when at least one response arrived. A worker that
//! misses the firing time keeps its local progress and holds the delta in
//! an outbox until it next answers in time, so the server state always
//! equals a rebuild over the records each worker has delivered.

mod convergence;
mod delta;
mod worker;

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{
    composite_reward, mask, mask_string, AvailabilityModel, BanditState, RewardNormalizers,
    RewardWeights, SelectionConfig, SelectionRecord,
};
use crate::energy::{DeviceProfile, EnergyRecord};
use crate::error::{ConfigError, FederationError, ModelError};
use crate::models::{Model, UserData};

pub use convergence::{convergence_metric, ConvergenceTracker};
pub use delta::ModelDelta;
pub use worker::{forget_quota, LocalOutcome, LocalPlan, WorkerState};

/// Training strategy of the workers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    /// Decremental forget of the oldest θ-fraction, incremental update.
    #[default]
    Deal,
    /// Full retrain on all data every round, nothing forgotten.
    Original,
    /// Only the newest data is kept (θ = 1 through the same forget path).
    Newfl,
}

impl Baseline {
    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::Deal => "deal",
            Baseline::Original => "original",
            Baseline::Newfl => "newfl",
        }
    }
}

impl std::fmt::Display for Baseline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Baseline {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deal" => Ok(Baseline::Deal),
            "original" => Ok(Baseline::Original),
            "newfl" => Ok(Baseline::Newfl),
            other => Err(ConfigError::new(
                "baseline",
                format!("unknown baseline `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub rounds: u64,
    pub ttl_ms: f64,
    /// 0 disables the convergence stop.
    pub epsilon: f64,
    pub patience: u32,
    pub theta: f64,
    pub forget_interval: u64,
    pub arrivals_per_round: usize,
    pub baseline: Baseline,
    pub priority_weight: f64,
    pub lru_theta: f64,
    /// Network delay per response is uniform in `[0, max]`.
    pub max_network_delay_ms: f64,
    pub selection: SelectionConfig,
    pub availability: Vec<f64>,
    pub reward_weights: RewardWeights,
    pub reward_normalizers: RewardNormalizers,
    pub seed: u64,
}

impl FederationConfig {
    /// Defaults for `devices` workers choosing `m` per round.
    pub fn new(devices: usize, m: usize) -> Self {
        Self {
            rounds: 50,
            ttl_ms: 1000.0,
            epsilon: 0.0,
            patience: 3,
            theta: 0.3,
            forget_interval: 1,
            arrivals_per_round: 1,
            baseline: Baseline::Deal,
            priority_weight: 1.0,
            lru_theta: 0.3,
            max_network_delay_ms: 20.0,
            selection: SelectionConfig::uniform(devices, m),
            availability: vec![1.0; devices],
            reward_weights: RewardWeights::default(),
            reward_normalizers: RewardNormalizers::default(),
            seed: 0,
        }
    }

    pub fn devices(&self) -> usize {
        self.selection.devices()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.selection.validate()?;
        self.reward_weights.validate()?;
        self.reward_normalizers.validate()?;
        if self.availability.len() != self.devices() {
            return Err(ConfigError::new(
                "availability",
                format!(
                    "expected {} probabilities, got {}",
                    self.devices(),
                    self.availability.len()
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(ConfigError::new(
                "theta",
                format!("must lie in [0, 1], got {}", self.theta),
            ));
        }
        if !(self.lru_theta > 0.0 && self.lru_theta <= 1.0) {
            return Err(ConfigError::new(
                "lru_theta",
                format!("must lie in (0, 1], got {}", self.lru_theta),
            ));
        }
        if !(self.ttl_ms > 0.0) {
            return Err(ConfigError::new("ttl_ms", "must be positive"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(ConfigError::new("epsilon", "must be non-negative"));
        }
        if self.forget_interval == 0 {
            return Err(ConfigError::new("forget_interval", "must be at least 1"));
        }
        if !(self.priority_weight > 0.0) {
            return Err(ConfigError::new("priority_weight", "must be positive"));
        }
        if !(self.max_network_delay_ms >= 0.0) {
            return Err(ConfigError::new(
                "max_network_delay_ms",
                "must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn plan(&self) -> LocalPlan {
        LocalPlan {
            baseline: self.baseline,
            theta: if self.baseline == Baseline::Newfl {
                1.0
            } else {
                self.theta
            },
            forget_interval: self.forget_interval,
            priority_weight: self.priority_weight,
            lru_theta: self.lru_theta,
        }
    }
}

/// Initial and future records of one worker.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkerData {
    pub initial: Vec<UserData>,
    pub stream: Vec<UserData>,
}

/// One selected worker's part of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerRound {
    pub device: usize,
    pub time_ms: f64,
    /// Compute time plus network delay.
    pub completion_ms: f64,
    pub energy: f64,
    pub ops: u64,
    pub forgotten: usize,
    pub added: usize,
    pub delta_size: usize,
    pub responded: bool,
    pub reward: f64,
    pub hooks: u64,
    pub dvfs_steps: u64,
    pub page_faults: u64,
    pub page_swaps: u64,
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub k: u64,
    pub available: Vec<usize>,
    pub selected: Vec<usize>,
    pub responders: Vec<usize>,
    pub workers: Vec<WorkerRound>,
    pub estimates: Vec<f64>,
    pub q: f64,
    pub aggregated: bool,
    pub version: u64,
    /// Simulated wall time of the round.
    pub duration_ms: f64,
    pub metric: Option<f64>,
    pub energy: f64,
    pub cumulative_energy: f64,
    /// Worker training operations.
    pub ops: u64,
    pub server_ops: u64,
    pub new_records: usize,
    /// Records held by the responders after the round.
    pub responder_records: usize,
    pub total_records: usize,
    pub privacy_proportion: f64,
}

pub struct ServerState {
    model: Arc<Model>,
    version: u64,
    bandit: BanditState,
    round: u64,
    tracker: ConvergenceTracker,
}

impl ServerState {
    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn bandit(&self) -> &BanditState {
        &self.bandit
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn converged_at(&self) -> Option<u64> {
        self.tracker.converged_at()
    }
}

/// Merges `deltas` into `model` in ascending device order. All or nothing.
pub fn aggregate(
    model: &Model,
    deltas: &[(usize, &ModelDelta)],
) -> Result<(Model, u64), FederationError> {
    let mut order: Vec<&(usize, &ModelDelta)> = deltas.iter().collect();
    order.sort_by_key(|(d, _)| *d);
    let mut next = model.clone();
    let mut ops = 0;
    for (device, delta) in order {
        let rep = delta
            .apply(&mut next)
            .map_err(|source| FederationError::Device {
                device: *device,
                source,
            })?;
        ops += rep.ops;
    }
    Ok((next, ops))
}

/// Whether two models agree: exactly for count models, to `rel_tol` in
/// the ridge weights.
pub fn models_agree(a: &Model, b: &Model, rel_tol: f64) -> bool {
    match (a, b) {
        (Model::Ridge(x), Model::Ridge(y)) => {
            x.dim() == y.dim()
                && (x.weights() - y.weights()).norm() <= rel_tol * y.weights().norm().max(1.0)
        }
        _ => a == b,
    }
}

pub struct Federation {
    cfg: FederationConfig,
    profiles: Vec<DeviceProfile>,
    server: ServerState,
    workers: Vec<WorkerState>,
    availability: AvailabilityModel,
    network: ChaCha8Rng,
    cumulative_energy: f64,
}

impl Federation {
    /// Builds the initial state. Worker `i` uses `profiles[i % len]`; the
    /// server starts from a rebuild over every worker's initial records.
    pub fn new(
        cfg: FederationConfig,
        template: &Model,
        profiles: Vec<DeviceProfile>,
        data: Vec<WorkerData>,
    ) -> Result<Self, FederationError> {
        cfg.validate()?;
        if profiles.is_empty() {
            return Err(
                ConfigError::new("profiles", "at least one device profile required").into(),
            );
        }
        for p in &profiles {
            p.validate()?;
        }
        if data.len() != cfg.devices() {
            return Err(ConfigError::new(
                "devices",
                format!("{} shards for {} devices", data.len(), cfg.devices()),
            )
            .into());
        }
        let mut workers = Vec::with_capacity(data.len());
        for (i, d) in data.into_iter().enumerate() {
            let w = WorkerState::new(i, i % profiles.len(), template, d.initial, d.stream)
                .map_err(|source| FederationError::Device { device: i, source })?;
            workers.push(w);
        }
        let mut model = template.empty_like();
        model.retrain(
            workers
                .iter()
                .flat_map(|w| w.incorporated())
                .map(|u| &u.sample),
        )?;
        let availability = AvailabilityModel::new(cfg.availability.clone(), cfg.seed)?;
        Ok(Self {
            network: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x6a09_e667_f3bc_c908)),
            server: ServerState {
                model: Arc::new(model),
                version: 0,
                bandit: BanditState::new(cfg.devices()),
                round: 0,
                tracker: ConvergenceTracker::new(cfg.epsilon, cfg.patience),
            },
            cfg,
            profiles,
            workers,
            availability,
            cumulative_energy: 0.0,
        })
    }

    pub fn config(&self) -> &FederationConfig {
        &self.cfg
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    pub fn total_records(&self) -> usize {
        self.workers.iter().map(|w| w.incorporated_len()).sum()
    }

    /// From-scratch build over every record the server has been told about.
    pub fn reference_model(&self) -> Result<Model, ModelError> {
        let mut m = self.server.model.empty_like();
        m.retrain(
            self.workers
                .iter()
                .flat_map(|w| w.acknowledged())
                .map(|u| &u.sample),
        )?;
        Ok(m)
    }

    pub fn converged(&self) -> bool {
        self.cfg.epsilon > 0.0 && self.server.tracker.converged_at().is_some()
    }

    pub fn run_round(&mut self) -> Result<RoundRecord, FederationError> {
        let k = self.server.round;
        let n = self.cfg.devices();
        let available = self.availability.draw();
        for w in &mut self.workers {
            w.receive_arrivals(self.cfg.arrivals_per_round);
        }
        let selected = self
            .server
            .bandit
            .select(&available, &self.cfg.selection, k);
        let estimates: Vec<f64> = (0..n)
            .map(|i| self.server.bandit.ucb_estimate(i, k))
            .collect();

        let snapshot = Arc::clone(&self.server.model);
        let version = self.server.version;
        let plan = self.cfg.plan();
        let mut attempts: Vec<(WorkerState, LocalOutcome, f64)> =
            Vec::with_capacity(selected.len());
        for &i in &selected {
            // stepped on a copy so an error leaves the worker untouched
            let mut next = self.workers[i].clone();
            let profile = &self.profiles[next.profile()];
            let out = next
                .local_step(version, Arc::clone(&snapshot), &plan, profile)
                .map_err(|source| FederationError::Device { device: i, source })?;
            let delay = if self.cfg.max_network_delay_ms > 0.0 {
                self.network.gen_range(0.0..=self.cfg.max_network_delay_ms)
            } else {
                0.0
            };
            let completion = out.cost.time_ms + delay;
            attempts.push((next, out, completion));
        }

        let fire = fire_time(attempts.iter().map(|a| a.2), self.cfg.ttl_ms);
        let mut workers = Vec::with_capacity(attempts.len());
        let mut rewards = Vec::with_capacity(attempts.len());
        let mut deliveries: Vec<(usize, ModelDelta)> = Vec::new();
        let (mut energy, mut ops, mut new_records, mut responder_records) = (0.0, 0, 0, 0);
        for (mut next, out, completion) in attempts {
            let ok = fire.is_some_and(|t| completion <= t);
            let device = next.device();
            let reward = if ok {
                composite_reward(
                    completion,
                    out.cost.energy,
                    (out.added + out.forgotten) as f64,
                    &self.cfg.reward_weights,
                    &self.cfg.reward_normalizers,
                )?
            } else {
                0.0
            };
            rewards.push(reward);
            energy += out.cost.energy;
            ops += out.cost.ops;
            let mut delta_size = 0;
            if ok {
                let (delta, added) = next.take_outbox();
                delta_size = delta.size();
                new_records += added;
                responder_records += next.incorporated_len();
                deliveries.push((device, delta));
            }
            self.workers[device] = next;
            workers.push(WorkerRound {
                device,
                time_ms: out.cost.time_ms,
                completion_ms: completion,
                energy: out.cost.energy,
                ops: out.cost.ops,
                forgotten: out.forgotten,
                added: out.added,
                delta_size,
                responded: ok,
                reward,
                hooks: out.cost.hooks,
                dvfs_steps: out.cost.dvfs_steps,
                page_faults: out.cost.page_faults,
                page_swaps: out.cost.page_swaps,
                levels: out.cost.levels,
            });
        }

        let mut metric = None;
        let mut server_ops = 0;
        let aggregated = !deliveries.is_empty();
        if aggregated {
            let refs: Vec<(usize, &ModelDelta)> = deliveries.iter().map(|(d, m)| (*d, m)).collect();
            let (next, ops) = aggregate(&self.server.model, &refs)?;
            server_ops = ops;
            let m = convergence_metric(&self.server.model, &next)?;
            self.server.tracker.observe(k, m);
            metric = Some(m);
            self.server.model = Arc::new(next);
            self.server.version += 1;
        }
        let q = self
            .server
            .bandit
            .observe(&selected, &rewards, &self.cfg.selection)?;
        self.cumulative_energy += energy;
        self.server.round += 1;

        let duration_ms = if selected.is_empty() {
            0.0
        } else {
            fire.unwrap_or(self.cfg.ttl_ms)
        };
        let responders = workers
            .iter()
            .filter(|w| w.responded)
            .map(|w| w.device)
            .collect();
        Ok(RoundRecord {
            k,
            available: available.into_iter().collect(),
            selected,
            responders,
            workers,
            estimates,
            q,
            aggregated,
            version: self.server.version,
            duration_ms,
            metric,
            energy,
            cumulative_energy: self.cumulative_energy,
            ops,
            server_ops,
            new_records,
            responder_records,
            total_records: self.total_records(),
            privacy_proportion: if responder_records == 0 {
                0.0
            } else {
                new_records as f64 / responder_records as f64
            },
        })
    }

    /// Runs until `rounds` rounds have passed or the model converged.
    pub fn run(&mut self) -> Result<Vec<RoundRecord>, FederationError> {
        let mut out = Vec::new();
        while self.server.round < self.cfg.rounds && !self.converged() {
            out.push(self.run_round()?);
        }
        Ok(out)
    }
}

/// Time at which aggregation fires given response times: the response
/// completing a strict majority if within `ttl`, else `ttl` if anything
/// arrived by then.
pub fn fire_time<I: IntoIterator<Item = f64>>(completions: I, ttl: f64) -> Option<f64> {
    let mut times: Vec<f64> = completions.into_iter().collect();
    if times.is_empty() {
        return None;
    }
    times.sort_by(f64::total_cmp);
    let majority = times[times.len() / 2];
    if majority <= ttl {
        Some(majority)
    } else if times[0] <= ttl {
        Some(ttl)
    } else {
        None
    }
}

/// Aggregate figures of a run; totals equal the column sums of the round
/// log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub baseline: Baseline,
    pub model: String,
    pub rounds: u64,
    pub aggregated_rounds: u64,
    pub total_time_ms: f64,
    pub total_energy: f64,
    pub total_ops: u64,
    pub total_server_ops: u64,
    pub convergence_round: Option<u64>,
    pub final_version: u64,
    pub privacy_proportion: Vec<f64>,
    pub accuracy: Option<f64>,
}

impl RunSummary {
    pub fn from_rounds(
        baseline: Baseline,
        model: &Model,
        rounds: &[RoundRecord],
        convergence_round: Option<u64>,
    ) -> Self {
        Self {
            baseline,
            model: model.kind().to_string(),
            rounds: rounds.len() as u64,
            aggregated_rounds: rounds.iter().filter(|r| r.aggregated).count() as u64,
            total_time_ms: rounds.iter().map(|r| r.duration_ms).sum(),
            total_energy: rounds.iter().map(|r| r.energy).sum(),
            total_ops: rounds.iter().map(|r| r.ops).sum(),
            total_server_ops: rounds.iter().map(|r| r.server_ops).sum(),
            convergence_round,
            final_version: rounds.last().map_or(0, |r| r.version),
            privacy_proportion: rounds.iter().map(|r| r.privacy_proportion).collect(),
            accuracy: None,
        }
    }
}

pub const ROUND_COLUMNS: [&str; 16] = [
    "k",
    "available",
    "selected",
    "responders",
    "time_ms",
    "q",
    "metric",
    "energy",
    "cumulative_energy",
    "ops",
    "server_ops",
    "aggregated",
    "version",
    "new_records",
    "total_records",
    "privacy_proportion",
];

pub fn write_rounds_csv<W: Write>(
    out: W,
    devices: usize,
    rounds: &[RoundRecord],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROUND_COLUMNS)?;
    for r in rounds {
        w.write_record([
            r.k.to_string(),
            r.available.len().to_string(),
            mask_string(&mask(r.selected.iter().copied(), devices)),
            mask_string(&mask(r.responders.iter().copied(), devices)),
            r.duration_ms.to_string(),
            r.q.to_string(),
            r.metric.map(|m| m.to_string()).unwrap_or_default(),
            r.energy.to_string(),
            r.cumulative_energy.to_string(),
            r.ops.to_string(),
            r.server_ops.to_string(),
            u8::from(r.aggregated).to_string(),
            r.version.to_string(),
            r.new_records.to_string(),
            r.total_records.to_string(),
            r.privacy_proportion.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn selection_records(devices: usize, rounds: &[RoundRecord]) -> Vec<SelectionRecord> {
    rounds
        .iter()
        .map(|r| SelectionRecord {
            k: r.k,
            available: mask(r.available.iter().copied(), devices),
            selected: mask(r.selected.iter().copied(), devices),
            estimates: r.estimates.clone(),
            q: r.q,
        })
        .collect()
}

pub fn energy_records(rounds: &[RoundRecord]) -> Vec<EnergyRecord> {
    rounds
        .iter()
        .flat_map(|r| {
            r.workers.iter().map(move |w| EnergyRecord {
                round: r.k,
                device: w.device,
                time_ms: w.time_ms,
                energy: w.energy,
                levels: w.levels.clone(),
                page_faults: w.page_faults,
                page_swaps: w.page_swaps,
                ops: w.ops,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth;
    use crate::models::PprModel;

    #[test]
    fn majority_of_five_is_third_response() {
        assert_eq!(
            fire_time([10.0, 20.0, 30.0, 40.0, 9999.0], 1000.0),
            Some(30.0)
        );
    }

    #[test]
    fn everyone_late_fires_nothing() {
        assert_eq!(fire_time([2000.0, 3000.0], 1000.0), None);
        assert_eq!(fire_time(std::iter::empty(), 1000.0), None);
    }

    #[test]
    fn single_response_is_a_majority() {
        assert_eq!(fire_time([12.0], 1000.0), Some(12.0));
    }

    #[test]
    fn minority_within_ttl_fires_at_ttl() {
        assert_eq!(fire_time([5.0, 2000.0, 3000.0], 1000.0), Some(1000.0));
    }

    fn ppr_federation(devices: usize, ttl: f64, seed: u64) -> Federation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..devices)
            .map(|_| {
                let mut d = synth::interactions(&mut rng, 12, 10, 1, 4);
                let stream = d.split_off(6);
                WorkerData { initial: d, stream }
            })
            .collect();
        let mut cfg = FederationConfig::new(devices, devices.min(3));
        cfg.ttl_ms = ttl;
        cfg.seed = seed;
        Federation::new(
            cfg,
            &Model::Ppr(PprModel::new(10)),
            DeviceProfile::presets(),
            data,
        )
        .unwrap()
    }

    #[test]
    fn everyone_late_leaves_model_alone() {
        let mut fed = ppr_federation(4, 1e-6, 3);
        let before = fed.server().model().as_ref().clone();
        let r = fed.run_round().unwrap();
        assert!(!r.aggregated);
        assert_eq!(r.version, 0);
        assert!(r.workers.iter().all(|w| w.reward == 0.0 && !w.responded));
        assert_eq!(fed.server().model().as_ref(), &before);
        assert_eq!(fed.reference_model().unwrap(), before);
    }

    #[test]
    fn server_tracks_reference_and_version() {
        let mut fed = ppr_federation(5, 1000.0, 9);
        let mut version = 0;
        for _ in 0..8 {
            let r = fed.run_round().unwrap();
            assert!(r.responders.iter().all(|d| r.selected.contains(d)));
            if r.aggregated {
                version += 1;
            }
            assert_eq!(fed.server().version(), version);
            assert!(models_agree(
                fed.server().model(),
                &fed.reference_model().unwrap(),
                0.0
            ));
        }
    }

    #[test]
    fn empty_delta_list_is_identity() {
        let m = Model::Ppr(PprModel::new(3));
        assert_eq!(aggregate(&m, &[]).unwrap().0, m);
    }

    #[test]
    fn aggregation_order_independent() {
        let base = Model::Ppr(PprModel::new(4));
        let mut a = ModelDelta::empty_for(&base);
        a.record(&crate::models::Sample::Interactions([0, 1].into()), 1)
            .unwrap();
        let mut b = ModelDelta::empty_for(&base);
        b.record(&crate::models::Sample::Interactions([1, 2, 3].into()), 1)
            .unwrap();
        let x = aggregate(&base, &[(0, &a), (1, &b)]).unwrap().0;
        let y = aggregate(&base, &[(1, &b), (0, &a)]).unwrap().0;
        assert_eq!(x, y);
    }

    #[test]
    fn offending_device_is_named() {
        let base = Model::Ppr(PprModel::new(4));
        let mut bad = ModelDelta::empty_for(&base);
        bad.record(&crate::models::Sample::Interactions([2].into()), -1)
            .unwrap();
        match aggregate(&base, &[(7, &bad)]) {
            Err(FederationError::Device { device: 7, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
