//! Recovering deleted data from stale model state.
//!
//! When one user is removed and the similarity model is rebuilt, every
//! item of that user loses one interaction. Comparing a stale similarity
//! entry `L_ij = c/(v_i + v_j − c)` with its rebuilt value reveals which
//! counts moved. Entries are compared as integer triples `(c, v_i, v_j)`,
//! and an entry is attributed to row `i` only when the row's own count
//! `v_i` moved: a plain value diff also flags every neighbour `j` of a
//! deleted item, which is not in the deleted history.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::InteractionHistory;
use crate::error::ModelError;
use crate::models::PprModel;

/// Absolute tolerance for the plain value comparison.
pub const VALUE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTriple {
    pub c: u64,
    pub v_row: u64,
    pub v_col: u64,
}

/// One similarity entry whose row count changed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub item: usize,
    pub other: usize,
    pub stale: CountTriple,
    pub rebuilt: CountTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub recovered: BTreeSet<usize>,
    /// Rows with any differing value, attributed or not.
    pub value_diff: BTreeSet<usize>,
    pub evidence: Vec<Evidence>,
    /// Whether every item count dropped by at most one, as a single
    /// deletion requires.
    pub single_deletion: bool,
    pub ground_truth: Option<BTreeSet<usize>>,
    pub exact_match: Option<bool>,
}

impl RecoveryReport {
    pub fn with_ground_truth(mut self, truth: BTreeSet<usize>) -> Self {
        self.exact_match = self.single_deletion.then(|| truth == self.recovered);
        self.ground_truth = Some(truth);
        self
    }
}

fn triple(m: &PprModel, i: usize, j: usize) -> CountTriple {
    CountTriple {
        c: m.cooccurrence(i, j),
        v_row: m.count(i),
        v_col: m.count(j),
    }
}

/// Compares `stale` with a rebuild over `updated`.
pub fn recover_deleted_items(
    stale: &PprModel,
    updated: &InteractionHistory,
) -> Result<RecoveryReport, ModelError> {
    if updated.item_count != stale.item_count() {
        return Err(ModelError::InputDomain(format!(
            "history has {} items, model has {}",
            updated.item_count,
            stale.item_count()
        )));
    }
    let rebuilt = PprModel::from_rows(
        stale.item_count(),
        stale.top_k(),
        updated.users.iter().map(|u| &u.items),
    )?;
    let single_deletion = (0..stale.item_count()).all(|i| {
        let (a, b) = (stale.count(i), rebuilt.count(i));
        a >= b && a - b <= 1
    });

    let mut recovered = BTreeSet::new();
    let mut value_diff = BTreeSet::new();
    let mut evidence = Vec::new();
    for i in 0..stale.item_count() {
        let old_row = stale.similarity_row(i);
        let new_row = rebuilt.similarity_row(i);
        let keys: BTreeSet<usize> = old_row.keys().chain(new_row.keys()).copied().collect();
        for j in keys {
            let differs = match (old_row.get(&j), new_row.get(&j)) {
                (Some(a), Some(b)) => (a - b).abs() > VALUE_TOLERANCE,
                _ => true,
            };
            if differs {
                value_diff.insert(i);
            }
            let (s, r) = (triple(stale, i, j), triple(&rebuilt, i, j));
            if s.v_row != r.v_row {
                recovered.insert(i);
                evidence.push(Evidence {
                    item: i,
                    other: j,
                    stale: s,
                    rebuilt: r,
                });
            }
        }
    }
    Ok(RecoveryReport {
        recovered,
        value_diff,
        evidence,
        single_deletion,
        ground_truth: None,
        exact_match: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPair {
    pub a: String,
    pub b: String,
    pub similarity: f64,
}

fn set_jaccard(x: &BTreeSet<usize>, y: &BTreeSet<usize>) -> f64 {
    let inter = x.intersection(y).count();
    let union = x.len() + y.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// All user pairs ranked by Jaccard similarity of their item sets,
/// descending; ties keep history order.
pub fn user_similarity_leak(history: &InteractionHistory) -> Vec<UserPair> {
    let users = &history.users;
    let mut out: Vec<(usize, usize, f64)> = Vec::new();
    for a in 0..users.len() {
        for b in a + 1..users.len() {
            out.push((a, b, set_jaccard(&users[a].items, &users[b].items)));
        }
    }
    out.sort_by(|x, y| y.2.total_cmp(&x.2).then((x.0, x.1).cmp(&(y.0, y.1))));
    out.into_iter()
        .map(|(a, b, similarity)| UserPair {
            a: users[a].id.clone(),
            b: users[b].id.clone(),
            similarity,
        })
        .collect()
}

/// Users other than `exclude` ranked by similarity to `items`.
pub fn nearest_users(
    history: &InteractionHistory,
    items: &BTreeSet<usize>,
    exclude: &str,
) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = history
        .users
        .iter()
        .filter(|u| u.id != exclude)
        .map(|u| (u.id.clone(), set_jaccard(items, &u.items)))
        .collect();
    out.sort_by(|x, y| y.1.total_cmp(&x.1));
    out
}

/// The affine set `{x : hᵀx = r}` a deleted regression row must lie in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceReport {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub dimension: usize,
    /// Minimum-norm member `r·h/‖h‖²`.
    pub point: Vec<f64>,
}

impl SubspaceReport {
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        let dot: f64 = self.normal.iter().zip(x).map(|(a, b)| a * b).sum();
        let scale = self.normal.iter().map(|a| a * a).sum::<f64>().sqrt();
        ((dot - self.offset) / scale).abs() <= tol
    }

    /// `(h, r)` scaled to a unit normal.
    pub fn normalized(&self) -> (Vec<f64>, f64) {
        let n = self.normal.iter().map(|a| a * a).sum::<f64>().sqrt();
        (self.normal.iter().map(|a| a / n).collect(), self.offset / n)
    }
}

pub fn ridge_subspace_report(h: &[f64], target: f64) -> Result<SubspaceReport, ModelError> {
    let norm2: f64 = h.iter().map(|a| a * a).sum();
    if h.is_empty() || norm2 == 0.0 {
        return Err(ModelError::InputDomain(
            "degenerate subspace: weight vector is zero".into(),
        ));
    }
    Ok(SubspaceReport {
        normal: h.to_vec(),
        offset: target,
        dimension: h.len() - 1,
        point: h.iter().map(|a| target * a / norm2).collect(),
    })
}

/// Items of `history` keyed by user id; convenience for attack fixtures.
pub fn items_by_user(history: &InteractionHistory) -> BTreeMap<String, BTreeSet<usize>> {
    history
        .users
        .iter()
        .map(|u| (u.id.clone(), u.items.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UserRecord;

    fn history(item_count: usize, users: &[(&str, &[usize])]) -> InteractionHistory {
        InteractionHistory::new(
            item_count,
            users
                .iter()
                .map(|(id, items)| UserRecord {
                    id: id.to_string(),
                    items: items.iter().copied().collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn stale(h: &InteractionHistory) -> PprModel {
        PprModel::from_rows(h.item_count, None, h.users.iter().map(|u| &u.items)).unwrap()
    }

    #[test]
    fn shared_items_are_recovered() {
        let full = history(
            5,
            &[
                ("d", &[0, 1]),
                ("x", &[0, 2]),
                ("y", &[1, 3]),
                ("z", &[2, 3, 4]),
            ],
        );
        let report = recover_deleted_items(&stale(&full), &full.without_user("d"))
            .unwrap()
            .with_ground_truth([0, 1].into());
        assert_eq!(report.recovered, [0, 1].into());
        assert_eq!(report.exact_match, Some(true));
        assert!(report
            .evidence
            .iter()
            .all(|e| report.recovered.contains(&e.item)));
        // the plain value diff also flags neighbours 2 and 3
        assert!(report.value_diff.is_superset(&report.recovered));
        assert!(report.value_diff.contains(&2));
    }

    #[test]
    fn empty_history_recovers_nothing() {
        let full = history(3, &[("d", &[]), ("x", &[0, 1])]);
        let report = recover_deleted_items(&stale(&full), &full.without_user("d")).unwrap();
        assert!(report.recovered.is_empty());
        assert!(report.value_diff.is_empty());
    }

    #[test]
    fn isolated_single_item_is_missed() {
        let full = history(3, &[("d", &[2]), ("x", &[0, 1])]);
        let report = recover_deleted_items(&stale(&full), &full.without_user("d"))
            .unwrap()
            .with_ground_truth([2].into());
        assert!(report.recovered.is_empty());
        assert_eq!(report.exact_match, Some(false));
    }

    #[test]
    fn multi_deletion_flagged() {
        let full = history(2, &[("a", &[0, 1]), ("b", &[0, 1]), ("c", &[0, 1])]);
        let report = recover_deleted_items(&stale(&full), &history(2, &[("c", &[0, 1])]))
            .unwrap()
            .with_ground_truth([0, 1].into());
        assert!(!report.single_deletion);
        assert_eq!(report.exact_match, None);
    }

    #[test]
    fn user_pair_similarities() {
        let h = history(
            6,
            &[
                ("a", &[1, 2, 3]),
                ("b", &[2, 3, 4]),
                ("c", &[1, 2, 3]),
                ("d", &[5]),
            ],
        );
        let ranked = user_similarity_leak(&h);
        assert_eq!(ranked.len(), 6);
        assert_eq!(
            (
                ranked[0].a.as_str(),
                ranked[0].b.as_str(),
                ranked[0].similarity
            ),
            ("a", "c", 1.0)
        );
        let ab = ranked.iter().find(|p| p.a == "a" && p.b == "b").unwrap();
        assert_eq!(ab.similarity, 0.5);
        assert!(ranked
            .iter()
            .filter(|p| p.b == "d")
            .all(|p| p.similarity == 0.0));
    }

    #[test]
    fn subspace_line_in_plane() {
        let r = ridge_subspace_report(&[1.0, 0.0], 3.0).unwrap();
        assert_eq!(r.dimension, 1);
        assert_eq!(r.point, vec![3.0, 0.0]);
        assert!(r.contains(&[3.0, -7.0], 1e-12));
        assert!(!r.contains(&[2.0, 0.0], 1e-12));
    }

    #[test]
    fn subspace_in_one_dimension_is_a_point() {
        let r = ridge_subspace_report(&[2.0], 3.0).unwrap();
        assert_eq!(r.dimension, 0);
        assert_eq!(r.point, vec![1.5]);
    }

    #[test]
    fn subspace_is_scale_invariant() {
        let a = ridge_subspace_report(&[1.0, 2.0, -2.0], 4.0)
            .unwrap()
            .normalized();
        let b = ridge_subspace_report(&[2.5, 5.0, -5.0], 10.0)
            .unwrap()
            .normalized();
        for (x, y) in a.0.iter().zip(&b.0) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.1 - b.1).abs() < 1e-12);
    }

    #[test]
    fn zero_normal_rejected() {
        assert!(ridge_subspace_report(&[0.0, 0.0], 1.0).is_err());
    }
}
