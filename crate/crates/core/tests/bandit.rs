use std::collections::BTreeSet;

use proptest::prelude::*;

use decfl::bandit::{
    composite_reward, simulate_bernoulli, truncated_ucb, BanditState, BernoulliInstance,
    RewardNormalizers, RewardWeights, SelectionConfig,
};

/// A state after `history` rounds of arbitrary feedback on `n` devices.
fn trained(n: usize, history: &[(Vec<bool>, Vec<f64>)], cfg: &SelectionConfig) -> BanditState {
    let mut s = BanditState::new(n);
    for (mask, rewards) in history {
        let sel: Vec<usize> = (0..n)
            .filter(|&i| mask[i % mask.len()])
            .take(cfg.m)
            .collect();
        let r: Vec<f64> = sel.iter().map(|&i| rewards[i % rewards.len()]).collect();
        s.observe(&sel, &r, cfg).unwrap();
    }
    s
}

fn history(n: usize) -> impl Strategy<Value = Vec<(Vec<bool>, Vec<f64>)>> {
    prop::collection::vec(
        (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(0.0f64..=1.0, n),
        ),
        0..30,
    )
}

proptest! {
    #[test]
    fn selection_is_legal(avail in prop::collection::btree_set(0..8usize, 0..=8), m in 1usize..5, hist in history(8)) {
        let cfg = SelectionConfig::uniform(8, m);
        let s = trained(8, &hist, &cfg);
        let k = s.round() + 1;
        let sel = s.select(&avail, &cfg, k);
        prop_assert!(sel.len() <= m);
        prop_assert_eq!(sel.len(), m.min(avail.len()));
        prop_assert!(sel.iter().all(|d| avail.contains(d)));
        prop_assert!(sel.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn estimate_stays_in_unit_interval(mu in 0.0f64..=1.0, c in 0u64..1000, k in 0.0f64..1e6) {
        let u = truncated_ucb(mu, c, k);
        prop_assert!((0.0..=1.0).contains(&u));
        prop_assert!(u >= mu);
    }

    #[test]
    fn selection_invariant_to_weight_scale(hist in history(6), scale in 0.01f64..100.0, w in prop::collection::vec(0.1f64..1.0, 6)) {
        let mut cfg = SelectionConfig::uniform(6, 2);
        cfg.beta = 0.0;
        cfg.weights = w.clone();
        let s = trained(6, &hist, &cfg);
        let mut scaled = cfg.clone();
        scaled.weights = w.iter().map(|g| g * scale).collect();
        let avail: BTreeSet<usize> = (0..6).collect();
        let k = s.round() + 1;
        prop_assert_eq!(s.select(&avail, &cfg, k), s.select(&avail, &scaled, k));
    }

    #[test]
    fn queues_never_negative(hist in history(5)) {
        let mut cfg = SelectionConfig::uniform(5, 2);
        cfg.min_fraction = vec![0.2; 5];
        let s = trained(5, &hist, &cfg);
        for i in 0..5 {
            prop_assert!(s.queue(i) >= 0.0);
        }
    }

    #[test]
    fn composite_reward_in_unit_interval(t in 0.0f64..1e5, e in 0.0f64..1e3, v in 0.0f64..1e3) {
        let r = composite_reward(t, e, v, &RewardWeights::default(), &RewardNormalizers::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
    }
}

#[test]
fn composite_reward_examples() {
    let n = RewardNormalizers::default();
    let w = RewardWeights {
        volume: 1.0 / 3.0,
        time: 1.0 / 3.0,
        energy: 1.0 / 3.0,
    };
    assert!((composite_reward(0.0, 0.0, n.volume, &w, &n).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(
        composite_reward(n.time_ms, n.energy, 0.0, &w, &n).unwrap(),
        0.0
    );
    let half = composite_reward(n.time_ms / 2.0, n.energy / 2.0, n.volume / 2.0, &w, &n).unwrap();
    assert!((half - 0.5).abs() < 1e-12);
}

#[test]
fn identical_seeds_give_identical_traces() {
    let inst = BernoulliInstance {
        means: vec![0.2, 0.5, 0.7, 0.4],
        availability: vec![0.8; 4],
        rounds: 500,
    };
    let cfg = SelectionConfig::uniform(4, 2);
    let a = simulate_bernoulli(&inst, &cfg, 11, true).unwrap();
    let b = simulate_bernoulli(&inst, &cfg, 11, true).unwrap();
    assert_eq!(a.trace, b.trace);
    let c = simulate_bernoulli(&inst, &cfg, 12, true).unwrap();
    assert_ne!(a.trace, c.trace);
}
