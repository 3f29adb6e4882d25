//! Seeded synthetic workloads for the three model kinds.

use std::collections::BTreeSet;

use rand::Rng;

use crate::models::{MnbRow, Sample, UserData};

/// Interaction rows with a popularity skew: item `i` is drawn with weight
/// `1 / (1 + i)^0.7`. Each user gets between `min_items` and `max_items`
/// distinct items (capped by `items`).
pub fn interactions<R: Rng>(
    rng: &mut R,
    users: usize,
    items: usize,
    min_items: usize,
    max_items: usize,
) -> Vec<UserData> {
    let weights: Vec<f64> = (0..items).map(|i| (1.0 + i as f64).powf(-0.7)).collect();
    let total: f64 = weights.iter().sum();
    (0..users)
        .map(|u| {
            let want = if items == 0 {
                0
            } else {
                rng.gen_range(min_items..=max_items.max(min_items))
                    .min(items)
            };
            let mut set = BTreeSet::new();
            while set.len() < want {
                let mut x = rng.gen::<f64>() * total;
                let mut pick = items - 1;
                for (i, w) in weights.iter().enumerate() {
                    if x < *w {
                        pick = i;
                        break;
                    }
                    x -= w;
                }
                set.insert(pick);
            }
            UserData::new(format!("u{u}"), Sample::Interactions(set))
        })
        .collect()
}

/// Linear-model rows `y = wᵀx + noise` with `x, w ~ U(-1, 1)`.
pub fn regression<R: Rng>(
    rng: &mut R,
    rows: usize,
    dim: usize,
    noise: f64,
) -> (Vec<UserData>, Vec<f64>) {
    let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let data = (0..rows)
        .map(|u| {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
                + noise * rng.gen_range(-1.0..1.0);
            UserData::new(
                format!("u{u}"),
                Sample::Observation {
                    features: x,
                    target: y,
                },
            )
        })
        .collect();
    (data, w)
}

/// Bag-of-features rows. Each class prefers a contiguous band of the
/// vocabulary so the classes are separable but overlapping.
pub fn classification<R: Rng>(
    rng: &mut R,
    rows: usize,
    classes: usize,
    vocab: usize,
    tokens: usize,
) -> Vec<UserData> {
    let band = (vocab / classes.max(1)).max(1);
    (0..rows)
        .map(|u| {
            let label = rng.gen_range(0..classes.max(1));
            let mut counts = vec![0u64; vocab];
            if vocab > 0 {
                for _ in 0..tokens {
                    let f = if rng.gen_bool(0.7) {
                        (label * band + rng.gen_range(0..band)) % vocab
                    } else {
                        rng.gen_range(0..vocab)
                    };
                    counts[f] += 1;
                }
            }
            let features = counts
                .iter()
                .enumerate()
                .filter(|(_, c)| **c > 0)
                .map(|(i, c)| (i, *c))
                .collect();
            UserData::new(format!("u{u}"), Sample::Counts(MnbRow { label, features }))
        })
        .collect()
}
