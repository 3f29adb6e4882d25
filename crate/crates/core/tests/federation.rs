use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use decfl::data::synth;
use decfl::energy::DeviceProfile;
use decfl::federation::{
    aggregate, models_agree, Baseline, Federation, FederationConfig, ModelDelta, WorkerData,
};
use decfl::models::{MnbModel, Model, PprModel, RidgeModel, UserData};

fn split(mut rows: Vec<UserData>, devices: usize, initial: usize) -> Vec<WorkerData> {
    let per = rows.len() / devices;
    (0..devices)
        .map(|_| {
            let mut mine: Vec<UserData> = rows.drain(..per).collect();
            let stream = mine.split_off(initial.min(mine.len()));
            WorkerData {
                initial: mine,
                stream,
            }
        })
        .collect()
}

fn workload(kind: u8, seed: u64, devices: usize) -> (Model, Vec<WorkerData>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = devices * 12;
    match kind {
        0 => (
            Model::Ppr(PprModel::new(15)),
            split(synth::interactions(&mut rng, n, 15, 1, 5), devices, 5),
        ),
        1 => (
            Model::Ridge(RidgeModel::new(4, 1.0).unwrap()),
            split(synth::regression(&mut rng, n, 4, 0.1).0, devices, 5),
        ),
        _ => (
            Model::Mnb(MnbModel::new(3, 10, 1.0).unwrap()),
            split(synth::classification(&mut rng, n, 3, 10, 6), devices, 5),
        ),
    }
}

fn federation(kind: u8, seed: u64, baseline: Baseline, theta: f64, avail: f64) -> Federation {
    let devices = 6;
    let (template, data) = workload(kind, seed, devices);
    let mut cfg = FederationConfig::new(devices, 3);
    cfg.seed = seed;
    cfg.baseline = baseline;
    cfg.theta = theta;
    cfg.rounds = 12;
    cfg.availability = vec![avail; devices];
    Federation::new(cfg, &template, DeviceProfile::presets(), data).unwrap()
}

fn baseline() -> impl Strategy<Value = Baseline> {
    prop_oneof![
        Just(Baseline::Deal),
        Just(Baseline::Newfl),
        Just(Baseline::Original)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn server_equals_rebuild_after_every_round(kind in 0u8..3, seed in any::<u64>(), b in baseline(), theta in 0.0f64..=1.0, avail in 0.3f64..=1.0) {
        let mut fed = federation(kind, seed, b, theta, avail);
        let mut version = 0;
        for _ in 0..12 {
            let r = fed.run_round().unwrap();
            prop_assert!(r.selected.iter().all(|d| r.available.contains(d)));
            prop_assert!(r.responders.iter().all(|d| r.selected.contains(d)));
            if r.aggregated {
                version += 1;
            }
            prop_assert_eq!(r.version, version);
            let reference = fed.reference_model().unwrap();
            prop_assert!(models_agree(fed.server().model(), &reference, 1e-6));
        }
    }

    #[test]
    fn aggregation_ignores_response_order(kind in 0u8..3, seed in any::<u64>()) {
        let (template, data) = workload(kind, seed, 4);
        let deltas: Vec<ModelDelta> = data
            .iter()
            .map(|w| {
                let mut d = ModelDelta::empty_for(&template);
                for u in &w.initial {
                    d.record(&u.sample, 1).unwrap();
                }
                d
            })
            .collect();
        let forward: Vec<(usize, &ModelDelta)> = deltas.iter().enumerate().collect();
        let mut backward = forward.clone();
        backward.reverse();
        let (a, _) = aggregate(&template, &forward).unwrap();
        let (b, _) = aggregate(&template, &backward).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn delta_then_negation_is_identity(kind in 0u8..3, seed in any::<u64>()) {
        let (template, data) = workload(kind, seed, 2);
        let mut base = template.clone();
        for u in &data[0].initial {
            base.update(&u.sample).unwrap();
        }
        let mut d = ModelDelta::empty_for(&template);
        for u in &data[1].initial {
            d.record(&u.sample, 1).unwrap();
        }
        let mut m = base.clone();
        d.apply(&mut m).unwrap();
        d.negated().apply(&mut m).unwrap();
        prop_assert!(models_agree(&m, &base, 1e-8));
    }
}

#[test]
fn equal_seeds_give_equal_round_streams() {
    for kind in 0..3 {
        let a = federation(kind, 5, Baseline::Deal, 0.3, 0.7).run().unwrap();
        let b = federation(kind, 5, Baseline::Deal, 0.3, 0.7).run().unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn full_forgetting_keeps_only_new_records() {
    let mut fed = federation(0, 3, Baseline::Newfl, 1.0, 1.0);
    for _ in 0..8 {
        let r = fed.run_round().unwrap();
        if r.aggregated && r.responder_records > 0 {
            assert_eq!(r.privacy_proportion, 1.0);
        }
    }
}
