use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use decfl::data::synth;
use decfl::energy::DeviceProfile;
use decfl::models::{MnbModel, Model, ModelKind, PprModel, RidgeModel, Sample, UserData};

use crate::config::{DatasetConfig, ExperimentConfig};
use crate::dataset;

/// Cost of bringing a model of `s` records up to date after one record
/// leaves and one arrives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: ModelKind,
    pub s: usize,
    /// Forget the oldest record, add the new one.
    pub decremental_ops: u64,
    /// Rebuild on the resulting `s` records.
    pub retrain_ops: u64,
    /// Build on the new record alone.
    pub newdata_ops: u64,
    pub decremental_ms: f64,
    pub retrain_ms: f64,
    pub newdata_ms: f64,
    pub ratio: f64,
    pub forget_ops: u64,
    /// `|Y_u|² + |Y_u|·|I|` for the similarity model, 0 otherwise.
    pub forget_bound: u64,
}

fn records(cfg: &ExperimentConfig, count: usize) -> Result<(Vec<UserData>, Model)> {
    if let DatasetConfig::Synthetic { .. } = cfg.dataset {
        let b = &cfg.bench;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        return Ok(match cfg.model.kind {
            ModelKind::Ppr => (
                synth::interactions(&mut rng, count, b.items, 2, 8),
                Model::Ppr(PprModel::with_top_k(b.items, cfg.model.top_k)),
            ),
            ModelKind::Ridge => (
                synth::regression(&mut rng, count, b.dim, 0.1).0,
                Model::Ridge(RidgeModel::new(b.dim, cfg.model.lambda)?),
            ),
            ModelKind::Mnb => (
                synth::classification(&mut rng, count, 3, b.dim, 12),
                Model::Mnb(MnbModel::new(3, b.dim, cfg.model.alpha)?),
            ),
        });
    }
    let data = dataset::load(cfg)?;
    if data.records.len() < count {
        bail!(
            "dataset has {} records, bench needs {count}",
            data.records.len()
        );
    }
    Ok((data.records, data.template))
}

/// Benchmarks one size. `data` holds at least `s + 1` records; the last
/// used one is the arrival.
pub fn bench_size(
    template: &Model,
    data: &[UserData],
    s: usize,
    profile: &DeviceProfile,
) -> Result<BenchRow> {
    let ms = |ops: u64| profile.training_time(ops, 1.0, profile.default_level);
    let kind = template.kind();
    if s == 0 {
        return Ok(BenchRow {
            model: kind,
            s,
            decremental_ops: 0,
            retrain_ops: 0,
            newdata_ops: 0,
            decremental_ms: ms(0),
            retrain_ms: ms(0),
            newdata_ms: ms(0),
            ratio: f64::NAN,
            forget_ops: 0,
            forget_bound: 0,
        });
    }
    let base = &data[..s];
    let arrival = &data[s];
    let mut model = template.empty_like();
    model.retrain(base.iter().map(|u| &u.sample))?;

    let mut dec = model.clone();
    let forget_ops = dec.forget(&base[0].sample)?.ops;
    let decremental_ops = forget_ops + dec.update(&arrival.sample)?.ops;

    let mut full = model.clone();
    let retrain_ops = full
        .retrain(
            base[1..]
                .iter()
                .chain(std::iter::once(arrival))
                .map(|u| &u.sample),
        )?
        .ops;

    let newdata_ops = template
        .empty_like()
        .retrain(std::iter::once(&arrival.sample))?
        .ops;

    let forget_bound = match (&base[0].sample, template) {
        (Sample::Interactions(items), Model::Ppr(m)) => {
            let y = items.len() as u64;
            y * y + y * m.item_count() as u64
        }
        _ => 0,
    };
    Ok(BenchRow {
        model: kind,
        s,
        decremental_ops,
        retrain_ops,
        newdata_ops,
        decremental_ms: ms(decremental_ops),
        retrain_ms: ms(retrain_ops),
        newdata_ms: ms(newdata_ops),
        ratio: retrain_ops as f64 / decremental_ops as f64,
        forget_ops,
        forget_bound,
    })
}

pub fn bench(cfg: &ExperimentConfig) -> Result<Vec<BenchRow>> {
    let max = cfg.bench.sizes.iter().copied().max().unwrap_or(0);
    let (data, template) = records(cfg, max + 1)?;
    let profile = crate::modes::run::profiles(cfg)?.remove(0);
    cfg.bench
        .sizes
        .iter()
        .map(|&s| bench_size(&template, &data, s, &profile))
        .collect()
}

pub fn write(out_dir: &Path, rows: &[BenchRow]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("bench.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(vec![path])
}
