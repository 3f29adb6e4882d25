use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::models::{Model, ModelKind, OpReport, Sample};

/// Sufficient-statistic difference produced by one local step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelDelta {
    Ppr {
        dv: BTreeMap<usize, i64>,
        dc: BTreeMap<(usize, usize), i64>,
    },
    Ridge {
        dz: Vec<f64>,
        /// Signed rank-one gram terms `±m·mᵀ`, in application order.
        terms: Vec<(f64, Vec<f64>)>,
    },
    Mnb {
        d_class: BTreeMap<usize, i64>,
        d_features: BTreeMap<(usize, usize), i64>,
    },
}

fn bump<K: Ord>(map: &mut BTreeMap<K, i64>, key: K, by: i64) {
    let v = map.entry(key).or_insert(0);
    *v += by;
}

fn prune<K: Ord>(map: &mut BTreeMap<K, i64>) {
    map.retain(|_, v| *v != 0);
}

impl ModelDelta {
    /// Identity delta for `model`.
    pub fn empty_for(model: &Model) -> ModelDelta {
        match model {
            Model::Ppr(_) => ModelDelta::Ppr {
                dv: BTreeMap::new(),
                dc: BTreeMap::new(),
            },
            Model::Ridge(m) => ModelDelta::Ridge {
                dz: vec![0.0; m.dim()],
                terms: Vec::new(),
            },
            Model::Mnb(_) => ModelDelta::Mnb {
                d_class: BTreeMap::new(),
                d_features: BTreeMap::new(),
            },
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelDelta::Ppr { .. } => ModelKind::Ppr,
            ModelDelta::Ridge { .. } => ModelKind::Ridge,
            ModelDelta::Mnb { .. } => ModelKind::Mnb,
        }
    }

    /// Accounts for adding (`sign = 1`) or removing (`sign = -1`) `sample`.
    pub fn record(&mut self, sample: &Sample, sign: i64) -> Result<(), ModelError> {
        match (self, sample) {
            (ModelDelta::Ppr { dv, dc }, Sample::Interactions(items)) => {
                let items: Vec<usize> = items.iter().copied().collect();
                for (x, &a) in items.iter().enumerate() {
                    bump(dv, a, sign);
                    for &b in &items[x + 1..] {
                        bump(dc, (a, b), sign);
                    }
                }
                prune(dv);
                prune(dc);
            }
            (ModelDelta::Ridge { dz, terms }, Sample::Observation { features, target }) => {
                if features.len() != dz.len() {
                    return Err(ModelError::InputDomain(format!(
                        "row has {} features, delta expects {}",
                        features.len(),
                        dz.len()
                    )));
                }
                let s = sign as f64;
                for (z, x) in dz.iter_mut().zip(features) {
                    *z += s * target * x;
                }
                terms.push((s, features.clone()));
            }
            (
                ModelDelta::Mnb {
                    d_class,
                    d_features,
                },
                Sample::Counts(row),
            ) => {
                bump(d_class, row.label, sign);
                for &(f, c) in &row.features {
                    bump(d_features, (row.label, f), sign * c as i64);
                }
                prune(d_class);
                prune(d_features);
            }
            (d, s) => {
                return Err(ModelError::InputDomain(format!(
                    "{} sample recorded into a {} delta",
                    s.kind(),
                    d.kind()
                )))
            }
        }
        Ok(())
    }

    /// Appends `other`, as if its records had been recorded after ours.
    pub fn merge(&mut self, other: ModelDelta) -> Result<(), ModelError> {
        fn add<K: Ord>(into: &mut BTreeMap<K, i64>, from: BTreeMap<K, i64>) {
            for (k, v) in from {
                bump(into, k, v);
            }
            prune(into);
        }
        match (self, other) {
            (ModelDelta::Ppr { dv, dc }, ModelDelta::Ppr { dv: ov, dc: oc }) => {
                add(dv, ov);
                add(dc, oc);
            }
            (ModelDelta::Ridge { dz, terms }, ModelDelta::Ridge { dz: oz, terms: ot }) => {
                if dz.len() != oz.len() {
                    return Err(ModelError::InputDomain(format!(
                        "merging {}-dimensional delta into {}-dimensional one",
                        oz.len(),
                        dz.len()
                    )));
                }
                for (z, o) in dz.iter_mut().zip(oz) {
                    *z += o;
                }
                terms.extend(ot);
            }
            (
                ModelDelta::Mnb {
                    d_class,
                    d_features,
                },
                ModelDelta::Mnb {
                    d_class: oc,
                    d_features: of,
                },
            ) => {
                add(d_class, oc);
                add(d_features, of);
            }
            (d, o) => {
                return Err(ModelError::InputDomain(format!(
                    "{} delta merged into a {} delta",
                    o.kind(),
                    d.kind()
                )))
            }
        }
        Ok(())
    }

    pub fn negated(&self) -> ModelDelta {
        let neg = |m: &BTreeMap<_, i64>| m.iter().map(|(k, v)| (*k, -v)).collect();
        match self {
            ModelDelta::Ppr { dv, dc } => ModelDelta::Ppr {
                dv: neg(dv),
                dc: dc.iter().map(|(k, v)| (*k, -v)).collect(),
            },
            ModelDelta::Ridge { dz, terms } => ModelDelta::Ridge {
                dz: dz.iter().map(|x| -x).collect(),
                terms: terms.iter().rev().map(|(s, m)| (-s, m.clone())).collect(),
            },
            ModelDelta::Mnb {
                d_class,
                d_features,
            } => ModelDelta::Mnb {
                d_class: neg(d_class),
                d_features: d_features.iter().map(|(k, v)| (*k, -v)).collect(),
            },
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            ModelDelta::Ppr { dv, dc } => dv.is_empty() && dc.is_empty(),
            ModelDelta::Ridge { dz, terms } => terms.is_empty() && dz.iter().all(|x| *x == 0.0),
            ModelDelta::Mnb {
                d_class,
                d_features,
            } => d_class.is_empty() && d_features.is_empty(),
        }
    }

    /// Number of stored entries, a proxy for message size.
    pub fn size(&self) -> usize {
        match self {
            ModelDelta::Ppr { dv, dc } => dv.len() + dc.len(),
            ModelDelta::Ridge { dz, terms } => {
                dz.len() + terms.iter().map(|t| t.1.len()).sum::<usize>()
            }
            ModelDelta::Mnb {
                d_class,
                d_features,
            } => d_class.len() + d_features.len(),
        }
    }

    /// Merges the delta into `model`. Count deltas are validated before
    /// any change.
    pub fn apply(&self, model: &mut Model) -> Result<OpReport, ModelError> {
        match (self, model) {
            (ModelDelta::Ppr { dv, dc }, Model::Ppr(m)) => m.apply_counts(dv, dc),
            (ModelDelta::Ridge { dz, terms }, Model::Ridge(m)) => m.apply_terms(dz, terms),
            (
                ModelDelta::Mnb {
                    d_class,
                    d_features,
                },
                Model::Mnb(m),
            ) => m.apply_counts(d_class, d_features),
            (d, m) => Err(ModelError::InputDomain(format!(
                "{} delta applied to a {} model",
                d.kind(),
                m.kind()
            ))),
        }
    }
}
