//! Brute-force oracles and generators shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use decfl::models::{MnbModel, MnbRow, PprModel, RidgeModel};

/// `v` and the strict upper triangle of `YᵀY`, counted directly.
pub fn ppr_counts(
    items: usize,
    rows: &[BTreeSet<usize>],
) -> (Vec<u64>, BTreeMap<(usize, usize), u64>) {
    let mut v = vec![0u64; items];
    let mut c = BTreeMap::new();
    for row in rows {
        for &a in row {
            v[a] += 1;
            for &b in row {
                if a < b {
                    *c.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
    }
    (v, c)
}

/// Asserts the model's counts and similarities match a direct count.
pub fn assert_ppr_matches(model: &PprModel, rows: &[BTreeSet<usize>]) {
    let (v, c) = ppr_counts(model.item_count(), rows);
    assert_eq!(model.counts(), &v[..]);
    let stored: BTreeMap<(usize, usize), u64> =
        model.pairs().map(|(a, b, n)| ((a, b), n)).collect();
    assert_eq!(stored, c);
    for (&(a, b), &n) in &c {
        let expect = n as f64 / (v[a] + v[b] - n) as f64;
        assert_eq!(model.similarity(a, b), Some(expect));
        assert_eq!(model.similarity(b, a), Some(expect));
    }
    model.check_invariants().unwrap();
}

/// Ridge weights by solving the normal equations with LU.
pub fn ridge_solution(dim: usize, lambda: f64, rows: &[(Vec<f64>, f64)]) -> DVector<f64> {
    let mut a = DMatrix::<f64>::identity(dim, dim) * lambda;
    let mut z = DVector::<f64>::zeros(dim);
    for (x, y) in rows {
        let x = DVector::from_column_slice(x);
        a += &x * x.transpose();
        z += &x * *y;
    }
    a.lu().solve(&z).expect("regularized gram is invertible")
}

pub fn relative_error(got: &DVector<f64>, want: &DVector<f64>) -> f64 {
    (got - want).norm() / want.norm().max(1.0)
}

pub fn assert_ridge_matches(model: &RidgeModel, rows: &[(Vec<f64>, f64)], tol: f64) {
    let want = ridge_solution(model.dim(), model.lambda(), rows);
    let err = relative_error(model.weights(), &want);
    assert!(err <= tol, "ridge weights off by {err}");
}

/// Class counts and per-class feature counts, counted directly.
pub fn assert_mnb_matches(model: &MnbModel, rows: &[MnbRow]) {
    let mut class = vec![0u64; model.classes()];
    let mut feat = vec![vec![0u64; model.vocab()]; model.classes()];
    for r in rows {
        class[r.label] += 1;
        for &(f, n) in &r.features {
            feat[r.label][f] += n;
        }
    }
    for k in 0..model.classes() {
        assert_eq!(model.class_count(k), class[k], "class {k}");
        for f in 0..model.vocab() {
            assert_eq!(
                model.feature_count(k, f),
                feat[k][f],
                "class {k} feature {f}"
            );
        }
    }
}

pub fn item_rows(items: usize, max_users: usize) -> impl Strategy<Value = Vec<BTreeSet<usize>>> {
    prop::collection::vec(
        prop::collection::btree_set(0..items, 0..=items.min(6)),
        1..=max_users,
    )
}

pub fn ridge_rows(dim: usize, max_users: usize) -> impl Strategy<Value = Vec<(Vec<f64>, f64)>> {
    prop::collection::vec(
        (prop::collection::vec(-1.0f64..1.0, dim), -2.0f64..2.0),
        1..=max_users,
    )
}

pub fn mnb_rows(
    classes: usize,
    vocab: usize,
    max_users: usize,
) -> impl Strategy<Value = Vec<MnbRow>> {
    let row = (
        0..classes,
        prop::collection::btree_map(0..vocab, 1u64..4, 0..=vocab.min(5)),
    )
        .prop_map(|(label, features)| MnbRow {
            label,
            features: features.into_iter().collect(),
        });
    prop::collection::vec(row, 1..=max_users)
}

/// Replays an interleaving: each step adds the next pending row or, when
/// `forget` is set and something is incorporated, forgets the incorporated
/// row selected by `pick`. Returns the surviving rows in insertion order.
pub fn interleave<S, T: Clone>(
    state: &mut S,
    rows: &[T],
    script: &[(bool, usize)],
    add: impl Fn(&mut S, &T),
    remove: impl Fn(&mut S, &T),
) -> Vec<T> {
    let mut next = 0;
    let mut live: Vec<T> = Vec::new();
    for &(forget, pick) in script {
        if forget && !live.is_empty() {
            let r = live.remove(pick % live.len());
            remove(state, &r);
        } else if next < rows.len() {
            add(state, &rows[next]);
            live.push(rows[next].clone());
            next += 1;
        }
    }
    live
}

pub fn script(len: usize) -> impl Strategy<Value = Vec<(bool, usize)>> {
    prop::collection::vec((any::<bool>(), any::<usize>()), 0..=len)
}
