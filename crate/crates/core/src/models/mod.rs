//! Incremental/decremental learners.
//!
//! Every mutating operation returns an [`OpReport`]: the number of primitive
//! operations performed, the DVFS hooks the operation emits, and the model
//! entries it touched (used to derive page-access traces).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub mod mnb;
pub mod ppr;
pub mod qr;
pub mod ridge;
mod snapshot;

pub use mnb::{MnbModel, MnbRow};
pub use ppr::{jaccard, PprModel};
pub use ridge::RidgeModel;

/// Frequency request emitted by a model operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DvfsHook {
    /// Step one level up.
    Up,
    /// Step one level down.
    Down,
    /// Return to the default level.
    Reset,
}

impl DvfsHook {
    pub fn delta(self) -> i32 {
        match self {
            DvfsHook::Up => 1,
            DvfsHook::Down => -1,
            DvfsHook::Reset => 0,
        }
    }
}

/// Contiguous range of model entries, addressed in the model's flat layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntrySpan {
    pub start: u64,
    pub len: u64,
}

impl EntrySpan {
    pub fn end(&self) -> u64 {
        self.start + self.len
    }
}

/// Cost and side effects of one model operation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OpReport {
    pub ops: u64,
    pub hooks: Vec<DvfsHook>,
    pub touched: Vec<EntrySpan>,
}

impl OpReport {
    pub(crate) fn touch(&mut self, addr: u64) {
        self.touch_span(addr, 1);
    }

    pub(crate) fn touch_span(&mut self, start: u64, len: u64) {
        if len == 0 {
            return;
        }
        if let Some(last) = self.touched.last_mut() {
            if start >= last.start && start <= last.end() {
                let end = last.end().max(start + len);
                last.len = end - last.start;
                return;
            }
        }
        self.touched.push(EntrySpan { start, len });
    }

    /// Appends another report, keeping the touch order.
    pub fn absorb(&mut self, other: OpReport) {
        self.ops += other.ops;
        self.hooks.extend(other.hooks);
        for span in other.touched {
            self.touch_span(span.start, span.len);
        }
    }

    /// Total number of touched entries (with repeats).
    pub fn touched_entries(&self) -> u64 {
        self.touched.iter().map(|s| s.len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ppr,
    Ridge,
    Mnb,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ppr => "ppr",
            ModelKind::Ridge => "ridge",
            ModelKind::Mnb => "mnb",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ppr" => Ok(ModelKind::Ppr),
            "ridge" => Ok(ModelKind::Ridge),
            "mnb" => Ok(ModelKind::Mnb),
            other => Err(ModelError::InputDomain(format!(
                "unknown model kind `{other}`"
            ))),
        }
    }
}

/// One user's contribution to a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Sample {
    /// Binary interaction row (set of item indices).
    Interactions(BTreeSet<usize>),
    /// Regression observation.
    Observation { features: Vec<f64>, target: f64 },
    /// Count row with class label.
    Counts(MnbRow),
}

impl Sample {
    pub fn kind(&self) -> ModelKind {
        match self {
            Sample::Interactions(_) => ModelKind::Ppr,
            Sample::Observation { .. } => ModelKind::Ridge,
            Sample::Counts(_) => ModelKind::Mnb,
        }
    }
}

/// A sample tagged with its owner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserData {
    pub id: String,
    pub sample: Sample,
}

impl UserData {
    pub fn new(id: impl Into<String>, sample: Sample) -> Self {
        Self {
            id: id.into(),
            sample,
        }
    }
}

/// Any of the supported model states.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Ppr(PprModel),
    Ridge(RidgeModel),
    Mnb(MnbModel),
}

fn kind_mismatch(model: ModelKind, sample: ModelKind) -> ModelError {
    ModelError::InputDomain(format!("{sample} sample given to a {model} model"))
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Ppr(_) => ModelKind::Ppr,
            Model::Ridge(_) => ModelKind::Ridge,
            Model::Mnb(_) => ModelKind::Mnb,
        }
    }

    pub fn update(&mut self, sample: &Sample) -> Result<OpReport, ModelError> {
        match (self, sample) {
            (Model::Ppr(m), Sample::Interactions(items)) => m.update(items),
            (Model::Ridge(m), Sample::Observation { features, target }) => {
                m.update(features, *target)
            }
            (Model::Mnb(m), Sample::Counts(row)) => m.update(row),
            (m, s) => Err(kind_mismatch(m.kind(), s.kind())),
        }
    }

    pub fn forget(&mut self, sample: &Sample) -> Result<OpReport, ModelError> {
        match (self, sample) {
            (Model::Ppr(m), Sample::Interactions(items)) => m.forget(items),
            (Model::Ridge(m), Sample::Observation { features, target }) => {
                m.forget(features, *target)
            }
            (Model::Mnb(m), Sample::Counts(row)) => m.forget(row),
            (m, s) => Err(kind_mismatch(m.kind(), s.kind())),
        }
    }

    /// Fresh model with the same hyperparameters and no data.
    pub fn empty_like(&self) -> Model {
        match self {
            Model::Ppr(m) => Model::Ppr(m.empty_like()),
            Model::Ridge(m) => Model::Ridge(m.empty_like()),
            Model::Mnb(m) => Model::Mnb(m.empty_like()),
        }
    }

    /// Rebuilds the model from scratch on `samples`, replacing the current
    /// state. The report covers clearing the old state and the rebuild.
    pub fn retrain<'a, I>(&mut self, samples: I) -> Result<OpReport, ModelError>
    where
        I: IntoIterator<Item = &'a Sample>,
    {
        let kind = self.kind();
        match self {
            Model::Ppr(m) => {
                let mut rows = Vec::new();
                for s in samples {
                    match s {
                        Sample::Interactions(items) => rows.push(items),
                        other => return Err(kind_mismatch(kind, other.kind())),
                    }
                }
                m.retrain(rows)
            }
            Model::Ridge(m) => {
                let mut rows = Vec::new();
                for s in samples {
                    match s {
                        Sample::Observation { features, target } => {
                            rows.push((features.as_slice(), *target))
                        }
                        other => return Err(kind_mismatch(kind, other.kind())),
                    }
                }
                m.retrain(rows)
            }
            Model::Mnb(m) => {
                let mut rows = Vec::new();
                for s in samples {
                    match s {
                        Sample::Counts(row) => rows.push(row),
                        other => return Err(kind_mismatch(kind, other.kind())),
                    }
                }
                m.retrain(rows)
            }
        }
    }

    pub fn op_counter(&self) -> u64 {
        match self {
            Model::Ppr(m) => m.op_counter(),
            Model::Ridge(m) => m.op_counter(),
            Model::Mnb(m) => m.op_counter(),
        }
    }

    pub fn to_snapshot(&self) -> String {
        match self {
            Model::Ppr(m) => m.to_snapshot(),
            Model::Ridge(m) => m.to_snapshot(),
            Model::Mnb(m) => m.to_snapshot(),
        }
    }

    pub fn from_snapshot(text: &str) -> Result<Model, ModelError> {
        let header = snapshot::Header::parse(text)?;
        match header.kind {
            ModelKind::Ppr => PprModel::from_snapshot(text).map(Model::Ppr),
            ModelKind::Ridge => RidgeModel::from_snapshot(text).map(Model::Ridge),
            ModelKind::Mnb => MnbModel::from_snapshot(text).map(Model::Mnb),
        }
    }
}
