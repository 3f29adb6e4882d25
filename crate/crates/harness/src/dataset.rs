//! Loading, splitting and sharding experiment data.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::BufReader;

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use decfl::data::{
    self, binarize, parse_labeled, parse_ratings, synth, Delimiter, InteractionHistory, UserRecord,
};
use decfl::federation::{forget_quota, WorkerData};
use decfl::models::{MnbModel, MnbRow, Model, ModelKind, PprModel, RidgeModel, Sample, UserData};
use decfl::ConfigError;

use crate::config::{DatasetConfig, ExperimentConfig};

/// Records plus an empty model of matching shape.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<UserData>,
    pub template: Model,
}

/// Stream used for synthetic data, distinct from the federation streams.
fn data_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x243f_6a88_85a3_08d3)
}

pub fn load(cfg: &ExperimentConfig) -> Result<Dataset> {
    let kind = cfg.model.kind;
    match &cfg.dataset {
        DatasetConfig::Synthetic {
            users,
            width,
            classes,
            min_items,
            max_items,
            noise,
            tokens,
        } => {
            let mut rng = data_rng(cfg.seed);
            let (records, template) = match kind {
                ModelKind::Ppr => (
                    synth::interactions(&mut rng, *users, *width, *min_items, *max_items),
                    Model::Ppr(PprModel::with_top_k(*width, cfg.model.top_k)),
                ),
                ModelKind::Ridge => (
                    synth::regression(&mut rng, *users, *width, *noise).0,
                    Model::Ridge(RidgeModel::new(*width, cfg.model.lambda)?),
                ),
                ModelKind::Mnb => (
                    synth::classification(&mut rng, *users, *classes, *width, *tokens),
                    Model::Mnb(MnbModel::new(*classes, *width, cfg.model.alpha)?),
                ),
            };
            Ok(Dataset { records, template })
        }
        DatasetConfig::Ratings {
            path,
            delimiter,
            threshold,
        } => {
            if kind != ModelKind::Ppr {
                return Err(ConfigError::new(
                    "model.kind",
                    "ratings datasets train the similarity model (ppr)",
                )
                .into());
            }
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let records = parse_ratings(BufReader::new(file), &Delimiter::parse(delimiter))
                .with_context(|| format!("parsing {}", path.display()))?;
            let history = binarize(&records, *threshold);
            Ok(from_history(&history, cfg.model.top_k))
        }
        DatasetConfig::Labeled { path } => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let parsed = parse_labeled(BufReader::new(file))
                .with_context(|| format!("parsing {}", path.display()))?;
            match kind {
                ModelKind::Ppr => Err(ConfigError::new(
                    "model.kind",
                    "labeled datasets train ridge or mnb models",
                )
                .into()),
                ModelKind::Ridge => {
                    let records = parsed
                        .rows
                        .iter()
                        .enumerate()
                        .map(|(i, r)| {
                            UserData::new(
                                format!("r{i}"),
                                Sample::Observation {
                                    features: r.dense(parsed.dim),
                                    target: r.label,
                                },
                            )
                        })
                        .collect();
                    Ok(Dataset {
                        records,
                        template: Model::Ridge(RidgeModel::new(parsed.dim, cfg.model.lambda)?),
                    })
                }
                ModelKind::Mnb => {
                    let mut classes: HashMap<String, usize> = HashMap::new();
                    let mut records = Vec::with_capacity(parsed.rows.len());
                    for (i, r) in parsed.rows.iter().enumerate() {
                        let next = classes.len();
                        let label = *classes.entry(r.label.to_string()).or_insert(next);
                        let mut features = Vec::with_capacity(r.features.len());
                        for &(f, v) in &r.features {
                            if v < 0.0 {
                                bail!("row {}: naive Bayes needs non-negative feature values, got {v}", i + 1);
                            }
                            let c = v.round() as u64;
                            if c > 0 {
                                features.push((f, c));
                            }
                        }
                        records.push(UserData::new(
                            format!("r{i}"),
                            Sample::Counts(MnbRow { label, features }),
                        ));
                    }
                    Ok(Dataset {
                        records,
                        template: Model::Mnb(MnbModel::new(
                            classes.len().max(1),
                            parsed.dim,
                            cfg.model.alpha,
                        )?),
                    })
                }
            }
        }
    }
}

pub fn from_history(history: &InteractionHistory, top_k: Option<usize>) -> Dataset {
    Dataset {
        records: history
            .users
            .iter()
            .map(|u| UserData::new(u.id.clone(), Sample::Interactions(u.items.clone())))
            .collect(),
        template: Model::Ppr(PprModel::with_top_k(history.item_count, top_k)),
    }
}

/// Interaction history view of PPR records.
pub fn history_of(records: &[UserData], item_count: usize) -> Result<InteractionHistory> {
    let users = records
        .iter()
        .map(|u| match &u.sample {
            Sample::Interactions(items) => Ok(UserRecord {
                id: u.id.clone(),
                items: items.clone(),
            }),
            other => bail!(
                "user {} has a {} sample, expected interactions",
                u.id,
                other.kind()
            ),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InteractionHistory::new(item_count, users)?)
}

/// Seeded user-level split; the training part keeps file order.
pub fn holdout_split(
    records: Vec<UserData>,
    fraction: f64,
    seed: u64,
) -> (Vec<UserData>, Vec<UserData>) {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x1319_8a2e_0370_7344));
    let held: BTreeSet<usize> = order
        .into_iter()
        .take((fraction * records.len() as f64) as usize)
        .collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, r) in records.into_iter().enumerate() {
        if held.contains(&i) {
            test.push(r);
        } else {
            train.push(r);
        }
    }
    (train, test)
}

/// Hash-shards `records` and splits each shard into initial and streamed parts.
pub fn worker_data(
    records: Vec<UserData>,
    devices: usize,
    initial_fraction: f64,
    seed: u64,
) -> Vec<WorkerData> {
    data::shard(records, devices, seed, |u| u.id.as_str())
        .into_iter()
        .map(|mut shard| {
            let initial = forget_quota(initial_fraction, shard.len());
            let stream = shard.split_off(initial);
            WorkerData {
                initial: shard,
                stream,
            }
        })
        .collect()
}

/// Held-out quality: RMSE (ridge), hit rate at `k` (similarity),
/// accuracy (naive Bayes). `None` without usable held-out records.
pub fn evaluate(model: &Model, holdout: &[UserData], k: usize, seed: u64) -> Result<Option<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa409_3822_299f_31d0);
    let (mut total, mut n) = (0.0, 0usize);
    for u in holdout {
        match (model, &u.sample) {
            (Model::Ridge(m), Sample::Observation { features, target }) => {
                let e = m.predict(features)? - target;
                total += e * e;
                n += 1;
            }
            (Model::Ppr(m), Sample::Interactions(items)) if items.len() >= 2 => {
                let hidden = *items
                    .iter()
                    .nth(rng.gen_range(0..items.len()))
                    .expect("index in range");
                let mut visible = items.clone();
                visible.remove(&hidden);
                if m.recommend(&visible, k).iter().any(|(i, _)| *i == hidden) {
                    total += 1.0;
                }
                n += 1;
            }
            (Model::Mnb(m), Sample::Counts(row)) => {
                if m.predict(&row.features)? == row.label {
                    total += 1.0;
                }
                n += 1;
            }
            _ => {}
        }
    }
    Ok(match (model, n) {
        (_, 0) => None,
        (Model::Ridge(_), n) => Some((total / n as f64).sqrt()),
        (_, n) => Some(total / n as f64),
    })
}
