use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::delta::ModelDelta;
use super::Baseline;
use crate::energy::{DeviceProfile, EnergyMeter, StepCost};
use crate::error::ModelError;
use crate::models::{Model, UserData};

/// `⌈θ·n⌉`, robust to products like `0.3 · 10` landing just above an integer.
pub fn forget_quota(theta: f64, n: usize) -> usize {
    let x = theta.clamp(0.0, 1.0) * n as f64;
    let nearest = x.round();
    let q = if (x - nearest).abs() < 1e-9 {
        nearest
    } else {
        x.ceil()
    };
    (q as usize).min(n)
}

/// Per-step knobs shared by all workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPlan {
    pub baseline: Baseline,
    pub theta: f64,
    /// Forget on every `forget_interval`-th participation.
    pub forget_interval: u64,
    pub priority_weight: f64,
    pub lru_theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub delta: ModelDelta,
    pub cost: StepCost,
    pub forgotten: usize,
    pub added: usize,
}

/// A simulated device and its data.
///
/// `incorporated` is ordered by ingestion; `local` is always the model of
/// exactly those records. Changes the server has not received yet wait in
/// an outbox until the worker next responds in time.
#[derive(Debug, Clone)]
pub struct WorkerState {
    device: usize,
    profile: usize,
    incorporated: VecDeque<UserData>,
    pending: VecDeque<UserData>,
    stream: VecDeque<UserData>,
    local: Model,
    outbox: ModelDelta,
    unsent_added: Vec<UserData>,
    unsent_forgotten: Vec<UserData>,
    view: Option<Arc<Model>>,
    version: u64,
    participations: u64,
}

impl WorkerState {
    /// Worker holding `initial` already incorporated; `stream` arrives later.
    pub fn new(
        device: usize,
        profile: usize,
        template: &Model,
        initial: Vec<UserData>,
        stream: Vec<UserData>,
    ) -> Result<Self, ModelError> {
        let mut local = template.empty_like();
        local.retrain(initial.iter().map(|u| &u.sample))?;
        Ok(Self {
            device,
            profile,
            incorporated: initial.into(),
            pending: VecDeque::new(),
            stream: stream.into(),
            outbox: ModelDelta::empty_for(&local),
            unsent_added: Vec::new(),
            unsent_forgotten: Vec::new(),
            local,
            view: None,
            version: 0,
            participations: 0,
        })
    }

    pub fn device(&self) -> usize {
        self.device
    }

    pub fn profile(&self) -> usize {
        self.profile
    }

    pub fn incorporated(&self) -> impl ExactSizeIterator<Item = &UserData> {
        self.incorporated.iter()
    }

    pub fn incorporated_len(&self) -> usize {
        self.incorporated.len()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn stream_len(&self) -> usize {
        self.stream.len()
    }

    /// Records the server's model currently reflects: incorporated records
    /// with the outbox undone.
    pub fn acknowledged(&self) -> Vec<&UserData> {
        let mut out: Vec<&UserData> = self
            .incorporated
            .iter()
            .chain(&self.unsent_forgotten)
            .collect();
        for a in &self.unsent_added {
            if let Some(pos) = out.iter().rposition(|u| *u == a) {
                out.remove(pos);
            }
        }
        out
    }

    /// Number of records added since the last delivery.
    pub fn unsent_added(&self) -> usize {
        self.unsent_added.len()
    }

    /// Empties the outbox, returning the accumulated delta and how many
    /// of its added records are still held.
    pub fn take_outbox(&mut self) -> (ModelDelta, usize) {
        let empty = ModelDelta::empty_for(&self.local);
        let mut gone: Vec<&UserData> = self.unsent_forgotten.iter().collect();
        let mut added = 0;
        for a in &self.unsent_added {
            match gone.iter().position(|u| *u == a) {
                Some(pos) => {
                    gone.swap_remove(pos);
                }
                None => added += 1,
            }
        }
        self.unsent_added.clear();
        self.unsent_forgotten.clear();
        (std::mem::replace(&mut self.outbox, empty), added)
    }

    pub fn local_model(&self) -> &Model {
        &self.local
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn participations(&self) -> u64 {
        self.participations
    }

    pub fn view(&self) -> Option<&Arc<Model>> {
        self.view.as_ref()
    }

    /// Moves up to `n` records from the future stream into the pending queue.
    pub fn receive_arrivals(&mut self, n: usize) {
        for _ in 0..n {
            match self.stream.pop_front() {
                Some(r) => self.pending.push_back(r),
                None => break,
            }
        }
    }

    /// Adopts the published model, forgets, then incorporates everything
    /// pending. The step's delta is also appended to the outbox.
    pub fn local_step(
        &mut self,
        version: u64,
        snapshot: Arc<Model>,
        plan: &LocalPlan,
        profile: &DeviceProfile,
    ) -> Result<LocalOutcome, ModelError> {
        if version < self.version {
            return Err(ModelError::Consistency(format!(
                "published version {version} older than replica version {}",
                self.version
            )));
        }
        self.view = Some(snapshot);
        self.version = version;
        self.participations += 1;

        let kind = self.local.kind();
        let mut meter = EnergyMeter::new(profile, plan.priority_weight, plan.lru_theta)
            .map_err(|e| ModelError::InputDomain(e.to_string()))?;
        let mut delta = ModelDelta::empty_for(&self.local);
        let mut forgotten = 0;
        let added = self.pending.len();

        match plan.baseline {
            Baseline::Original => {
                let all: Vec<&UserData> = self
                    .incorporated
                    .iter()
                    .chain(self.pending.iter())
                    .collect();
                let rep = self.local.retrain(all.iter().map(|u| &u.sample))?;
                meter.charge(kind, &rep);
                for u in &self.pending {
                    delta.record(&u.sample, 1)?;
                }
            }
            Baseline::Deal | Baseline::Newfl => {
                let quota = match plan.baseline {
                    Baseline::Newfl => self.incorporated.len(),
                    _ if self
                        .participations
                        .is_multiple_of(plan.forget_interval.max(1)) =>
                    {
                        forget_quota(plan.theta, self.incorporated.len())
                    }
                    _ => 0,
                };
                for _ in 0..quota {
                    let old = self
                        .incorporated
                        .pop_front()
                        .expect("quota bounded by shard size");
                    let rep = self.local.forget(&old.sample)?;
                    meter.charge(kind, &rep);
                    delta.record(&old.sample, -1)?;
                    self.unsent_forgotten.push(old);
                    forgotten += 1;
                }
                for u in &self.pending {
                    let rep = self.local.update(&u.sample)?;
                    meter.charge(kind, &rep);
                    delta.record(&u.sample, 1)?;
                }
            }
        }
        self.outbox.merge(delta.clone())?;
        self.unsent_added.extend(self.pending.iter().cloned());
        self.incorporated.extend(self.pending.drain(..));
        Ok(LocalOutcome {
            delta,
            cost: meter.finish(),
            forgotten,
            added,
        })
    }
}
