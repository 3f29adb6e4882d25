//! Item-item co-occurrence model with Jaccard similarities.
//!
//! State: per-item interaction counts `v`, the co-occurrence counts
//! `C = YᵀY` (off-diagonal, stored symmetrically; the diagonal is `v`) and
//! the similarity matrix `L`. Update and forget adjust `v` and `C` for the
//! user's item pairs and recompute the similarity rows of the user's items.

use std::collections::{BTreeMap, BTreeSet};

use super::snapshot::{self, Header};
use super::{DvfsHook, ModelKind, OpReport};
use crate::error::ModelError;

/// Jaccard similarity from a co-occurrence count and the two item counts.
///
/// A zero denominator (neither item was ever interacted with) yields 0.
pub fn jaccard(c: u64, v1: u64, v2: u64) -> Result<f64, ModelError> {
    if c > v1.min(v2) {
        return Err(ModelError::Consistency(format!(
            "co-occurrence {c} exceeds item counts ({v1}, {v2})"
        )));
    }
    let union = v1 + v2 - c;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(c as f64 / union as f64)
}

#[derive(Debug, Clone)]
pub struct PprModel {
    item_count: usize,
    counts: Vec<u64>,
    cooc: Vec<BTreeMap<usize, u64>>,
    sim: Vec<BTreeMap<usize, f64>>,
    top_k: Option<usize>,
    op_counter: u64,
}

impl PartialEq for PprModel {
    /// Logical equality; the operation counter is not part of the state.
    fn eq(&self, other: &Self) -> bool {
        self.item_count == other.item_count
            && self.top_k == other.top_k
            && self.counts == other.counts
            && self.cooc == other.cooc
            && self.sim == other.sim
    }
}

impl PprModel {
    pub fn new(item_count: usize) -> Self {
        Self::with_top_k(item_count, None)
    }

    /// Model retaining at most `top_k` similarity entries per item.
    pub fn with_top_k(item_count: usize, top_k: Option<usize>) -> Self {
        Self {
            item_count,
            counts: vec![0; item_count],
            cooc: vec![BTreeMap::new(); item_count],
            sim: vec![BTreeMap::new(); item_count],
            top_k,
            op_counter: 0,
        }
    }

    /// Builds a model from scratch over the given interaction rows.
    pub fn from_rows<'a, I>(
        item_count: usize,
        top_k: Option<usize>,
        rows: I,
    ) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = &'a BTreeSet<usize>>,
    {
        let mut model = Self::with_top_k(item_count, top_k);
        model.retrain(rows)?;
        Ok(model)
    }

    pub fn empty_like(&self) -> Self {
        Self::with_top_k(self.item_count, self.top_k)
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    pub fn top_k(&self) -> Option<usize> {
        self.top_k
    }

    pub fn op_counter(&self) -> u64 {
        self.op_counter
    }

    /// Number of users that interacted with `item` (`v_i`).
    pub fn count(&self, item: usize) -> u64 {
        self.counts.get(item).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `C(a, b)`; the diagonal is the item count.
    pub fn cooccurrence(&self, a: usize, b: usize) -> u64 {
        if a == b {
            return self.count(a);
        }
        self.cooc
            .get(a)
            .and_then(|row| row.get(&b))
            .copied()
            .unwrap_or(0)
    }

    pub fn cooccurrence_row(&self, item: usize) -> &BTreeMap<usize, u64> {
        &self.cooc[item]
    }

    /// Stored similarity `L(a, b)`, if any.
    pub fn similarity(&self, a: usize, b: usize) -> Option<f64> {
        self.sim.get(a).and_then(|row| row.get(&b)).copied()
    }

    pub fn similarity_row(&self, item: usize) -> &BTreeMap<usize, f64> {
        &self.sim[item]
    }

    /// Stored co-occurrence pairs `(a, b, C)` with `a < b`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.cooc
            .iter()
            .enumerate()
            .flat_map(|(a, row)| row.range(a + 1..).map(move |(&b, &c)| (a, b, c)))
    }

    pub fn stored_similarities(&self) -> usize {
        self.sim.iter().map(BTreeMap::len).sum()
    }

    fn v_addr(&self, i: usize) -> u64 {
        i as u64
    }

    fn c_addr(&self, a: usize, b: usize) -> u64 {
        let n = self.item_count as u64;
        n + a as u64 * n + b as u64
    }

    fn l_addr(&self, a: usize, b: usize) -> u64 {
        let n = self.item_count as u64;
        n + n * n + a as u64 * n + b as u64
    }

    fn check_items(&self, items: &BTreeSet<usize>) -> Result<(), ModelError> {
        match items.iter().next_back() {
            Some(&max) if max >= self.item_count => Err(ModelError::InputDomain(format!(
                "item index {max} out of range for {} items",
                self.item_count
            ))),
            _ => Ok(()),
        }
    }

    /// Incorporates one user's interaction set.
    pub fn update(&mut self, items: &BTreeSet<usize>) -> Result<OpReport, ModelError> {
        self.check_items(items)?;
        let list: Vec<usize> = items.iter().copied().collect();
        let mut rep = OpReport::default();
        for &i in &list {
            self.counts[i] += 1;
            rep.ops += 1;
            rep.touch(self.v_addr(i));
        }
        for (x, &a) in list.iter().enumerate() {
            for &b in &list[x + 1..] {
                *self.cooc[a].entry(b).or_insert(0) += 1;
                *self.cooc[b].entry(a).or_insert(0) += 1;
                rep.ops += 1;
                rep.touch(self.c_addr(a, b));
            }
        }
        self.refresh(&list, &[], Some(DvfsHook::Up), &mut rep);
        self.op_counter += rep.ops;
        Ok(rep)
    }

    /// Removes one previously incorporated user's interaction set.
    ///
    /// Fails without modifying the model if any count would go negative.
    pub fn forget(&mut self, items: &BTreeSet<usize>) -> Result<OpReport, ModelError> {
        self.check_items(items)?;
        let list: Vec<usize> = items.iter().copied().collect();
        for &i in &list {
            if self.counts[i] == 0 {
                return Err(ModelError::Consistency(format!(
                    "item {i} has no interactions to forget"
                )));
            }
        }
        for (x, &a) in list.iter().enumerate() {
            for &b in &list[x + 1..] {
                if self.cooccurrence(a, b) == 0 {
                    return Err(ModelError::Consistency(format!(
                        "pair ({a}, {b}) has no co-occurrence to forget"
                    )));
                }
            }
        }

        let mut rep = OpReport::default();
        for &i in &list {
            self.counts[i] -= 1;
            rep.ops += 1;
            rep.touch(self.v_addr(i));
        }
        let mut emptied = Vec::new();
        for (x, &a) in list.iter().enumerate() {
            for &b in &list[x + 1..] {
                let c = self.cooc[a].get_mut(&b).expect("checked above");
                *c -= 1;
                if *c == 0 {
                    self.cooc[a].remove(&b);
                    self.cooc[b].remove(&a);
                    emptied.push((a, b));
                } else {
                    *self.cooc[b].get_mut(&a).expect("symmetric") -= 1;
                }
                rep.ops += 1;
                rep.touch(self.c_addr(a, b));
                rep.hooks.push(DvfsHook::Down);
            }
        }
        self.refresh(&list, &emptied, Some(DvfsHook::Reset), &mut rep);
        self.op_counter += rep.ops;
        Ok(rep)
    }

    /// Recomputes the similarity rows of `rows` after their counts changed.
    ///
    /// `emptied` lists pairs whose co-occurrence dropped to zero; their
    /// similarity entries are dropped. One hook is emitted per row.
    fn refresh(
        &mut self,
        rows: &[usize],
        emptied: &[(usize, usize)],
        hook: Option<DvfsHook>,
        rep: &mut OpReport,
    ) {
        for &(a, b) in emptied {
            if self.sim[a].remove(&b).is_some() {
                rep.touch(self.l_addr(a, b));
            }
            if self.sim[b].remove(&a).is_some() {
                rep.touch(self.l_addr(b, a));
            }
        }
        match self.top_k {
            None => {
                for &a in rows {
                    let va = self.counts[a];
                    let row: Vec<(usize, u64)> =
                        self.cooc[a].iter().map(|(&b, &c)| (b, c)).collect();
                    for (b, c) in row {
                        let l = jaccard(c, va, self.counts[b])
                            .expect("co-occurrence bounded by counts");
                        self.sim[a].insert(b, l);
                        self.sim[b].insert(a, l);
                        rep.ops += 1;
                        rep.touch(self.l_addr(a, b));
                        rep.touch(self.l_addr(b, a));
                    }
                    if let Some(h) = hook {
                        rep.hooks.push(h);
                    }
                }
            }
            Some(_) => {
                // Truncated rows are rebuilt from the full co-occurrence rows:
                // every neighbour of a changed item may reorder its top-k.
                let mut affected: BTreeSet<usize> = rows.iter().copied().collect();
                for &(a, b) in emptied {
                    affected.insert(a);
                    affected.insert(b);
                }
                for &a in rows {
                    affected.extend(self.cooc[a].keys().copied());
                }
                for r in affected {
                    self.rebuild_row(r, rep);
                }
                if let Some(h) = hook {
                    rep.hooks.extend(std::iter::repeat_n(h, rows.len()));
                }
            }
        }
    }

    fn rebuild_row(&mut self, r: usize, rep: &mut OpReport) {
        let vr = self.counts[r];
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(self.cooc[r].len());
        for (&b, &c) in &self.cooc[r] {
            entries.push((
                b,
                jaccard(c, vr, self.counts[b]).expect("co-occurrence bounded by counts"),
            ));
            rep.ops += 1;
        }
        if let Some(k) = self.top_k {
            sort_ranked(&mut entries);
            entries.truncate(k);
        }
        let old = std::mem::take(&mut self.sim[r]);
        for b in old.keys() {
            rep.touch(self.l_addr(r, *b));
        }
        for &(b, _) in &entries {
            rep.touch(self.l_addr(r, b));
        }
        self.sim[r] = entries.into_iter().collect();
    }

    /// Replaces the state by a from-scratch build over `rows`.
    ///
    /// The report touches every previously stored entry (clearing) and every
    /// entry written by the rebuild; no DVFS hooks are emitted.
    pub fn retrain<'a, I>(&mut self, rows: I) -> Result<OpReport, ModelError>
    where
        I: IntoIterator<Item = &'a BTreeSet<usize>>,
    {
        let rows: Vec<&BTreeSet<usize>> = rows.into_iter().collect();
        for items in &rows {
            self.check_items(items)?;
        }
        let mut rep = OpReport::default();
        for i in 0..self.item_count {
            if self.counts[i] > 0 {
                rep.touch(self.v_addr(i));
            }
        }
        let old_pairs: Vec<(usize, usize)> = self.pairs().map(|(a, b, _)| (a, b)).collect();
        for (a, b) in old_pairs {
            rep.touch(self.c_addr(a, b));
        }
        for a in 0..self.item_count {
            for &b in self.sim[a].keys() {
                rep.touch(self.l_addr(a, b));
            }
        }
        let counter = self.op_counter;
        *self = self.empty_like();
        self.op_counter = counter;

        for items in rows {
            let list: Vec<usize> = items.iter().copied().collect();
            for &i in &list {
                self.counts[i] += 1;
                rep.ops += 1;
                rep.touch(self.v_addr(i));
            }
            for (x, &a) in list.iter().enumerate() {
                for &b in &list[x + 1..] {
                    *self.cooc[a].entry(b).or_insert(0) += 1;
                    *self.cooc[b].entry(a).or_insert(0) += 1;
                    rep.ops += 1;
                    rep.touch(self.c_addr(a, b));
                }
            }
        }
        match self.top_k {
            None => {
                for a in 0..self.item_count {
                    let upper: Vec<(usize, u64)> =
                        self.cooc[a].range(a + 1..).map(|(&b, &c)| (b, c)).collect();
                    for (b, c) in upper {
                        let l = jaccard(c, self.counts[a], self.counts[b])
                            .expect("co-occurrence bounded by counts");
                        self.sim[a].insert(b, l);
                        self.sim[b].insert(a, l);
                        rep.ops += 1;
                        rep.touch(self.l_addr(a, b));
                        rep.touch(self.l_addr(b, a));
                    }
                }
            }
            Some(_) => {
                for a in 0..self.item_count {
                    self.rebuild_row(a, &mut rep);
                }
            }
        }
        self.op_counter += rep.ops;
        Ok(rep)
    }

    /// Applies signed count changes (as produced by a batch of updates and
    /// forgets) and recomputes the affected similarity rows.
    ///
    /// The model is left untouched if any count would become negative.
    pub fn apply_counts(
        &mut self,
        dv: &BTreeMap<usize, i64>,
        dc: &BTreeMap<(usize, usize), i64>,
    ) -> Result<OpReport, ModelError> {
        for (&i, &d) in dv {
            if i >= self.item_count {
                return Err(ModelError::InputDomain(format!(
                    "item index {i} out of range"
                )));
            }
            if (self.counts[i] as i64) + d < 0 {
                return Err(ModelError::Consistency(format!(
                    "count of item {i} would become negative"
                )));
            }
        }
        for (&(a, b), &d) in dc {
            if a >= b || b >= self.item_count {
                return Err(ModelError::InputDomain(format!(
                    "malformed pair ({a}, {b})"
                )));
            }
            if (self.cooccurrence(a, b) as i64) + d < 0 {
                return Err(ModelError::Consistency(format!(
                    "co-occurrence of ({a}, {b}) would become negative"
                )));
            }
        }
        let mut rep = OpReport::default();
        let mut rows: BTreeSet<usize> = BTreeSet::new();
        for (&i, &d) in dv {
            if d != 0 {
                self.counts[i] = (self.counts[i] as i64 + d) as u64;
                rep.ops += 1;
                rep.touch(self.v_addr(i));
                rows.insert(i);
            }
        }
        let mut emptied = Vec::new();
        for (&(a, b), &d) in dc {
            if d == 0 {
                continue;
            }
            let next = (self.cooccurrence(a, b) as i64 + d) as u64;
            if next == 0 {
                self.cooc[a].remove(&b);
                self.cooc[b].remove(&a);
                emptied.push((a, b));
            } else {
                self.cooc[a].insert(b, next);
                self.cooc[b].insert(a, next);
            }
            rep.ops += 1;
            rep.touch(self.c_addr(a, b));
            rows.insert(a);
            rows.insert(b);
        }
        for &i in &rows {
            for &b in self.cooc[i].keys() {
                if self.cooc[i][&b] > self.counts[i].min(self.counts[b]) {
                    return Err(ModelError::Consistency(format!(
                        "co-occurrence of ({i}, {b}) exceeds item counts after delta"
                    )));
                }
            }
        }
        let rows: Vec<usize> = rows.into_iter().collect();
        self.refresh(&rows, &emptied, None, &mut rep);
        self.op_counter += rep.ops;
        Ok(rep)
    }

    /// The `k` most similar items to `item`, ties broken by ascending index.
    pub fn predict(&self, item: usize, k: usize) -> Result<Vec<(usize, f64)>, ModelError> {
        if item >= self.item_count {
            return Err(ModelError::InputDomain(format!(
                "item index {item} out of range for {} items",
                self.item_count
            )));
        }
        let mut entries: Vec<(usize, f64)> = self.sim[item].iter().map(|(&b, &l)| (b, l)).collect();
        sort_ranked(&mut entries);
        entries.truncate(k);
        Ok(entries)
    }

    /// Scores unseen items for a user by summing similarities to the user's
    /// history and returns the top `k`.
    pub fn recommend(&self, history: &BTreeSet<usize>, k: usize) -> Vec<(usize, f64)> {
        let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
        for &h in history {
            if h >= self.item_count {
                continue;
            }
            for (&b, &l) in &self.sim[h] {
                if !history.contains(&b) {
                    *scores.entry(b).or_insert(0.0) += l;
                }
            }
        }
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().collect();
        sort_ranked(&mut ranked);
        ranked.truncate(k);
        ranked
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (a, row) in self.cooc.iter().enumerate() {
            for (&b, &c) in row {
                if a == b {
                    return Err(format!("diagonal entry stored at {a}"));
                }
                if self.cooc[b].get(&a) != Some(&c) {
                    return Err(format!("asymmetric co-occurrence at ({a}, {b})"));
                }
                if c == 0 || c > self.counts[a].min(self.counts[b]) {
                    return Err(format!("co-occurrence {c} at ({a}, {b}) out of bounds"));
                }
            }
        }
        for (a, row) in self.sim.iter().enumerate() {
            for (&b, &l) in row {
                if !(0.0..=1.0).contains(&l) {
                    return Err(format!("similarity {l} at ({a}, {b}) outside [0, 1]"));
                }
                if !self.cooc[a].contains_key(&b) {
                    return Err(format!("similarity without co-occurrence at ({a}, {b})"));
                }
            }
        }
        Ok(())
    }

    pub fn to_snapshot(&self) -> String {
        use std::fmt::Write;
        let top_k = self
            .top_k
            .map_or_else(|| "none".to_string(), |k| k.to_string());
        let mut out = snapshot::header_line(
            ModelKind::Ppr,
            &[("items", self.item_count.to_string()), ("top_k", top_k)],
        );
        for (i, &v) in self.counts.iter().enumerate() {
            if v > 0 {
                let _ = writeln!(out, "v {i} {v}");
            }
        }
        for (a, b, c) in self.pairs() {
            let _ = writeln!(out, "c {a} {b} {c}");
        }
        for (a, row) in self.sim.iter().enumerate() {
            for (b, l) in row {
                let _ = writeln!(out, "l {a} {b} {l}");
            }
        }
        out
    }

    pub fn from_snapshot(text: &str) -> Result<Self, ModelError> {
        let header = Header::parse(text)?;
        header.expect_kind(ModelKind::Ppr)?;
        let items: usize = header.get("items")?;
        let top_k = match header.params.get("top_k").map(String::as_str) {
            Some("none") | None => None,
            Some(_) => Some(header.get::<usize>("top_k")?),
        };
        let mut model = Self::with_top_k(items, top_k);
        let bad = |line: usize, msg: &str| ModelError::Snapshot(format!("line {line}: {msg}"));
        for (line, f) in snapshot::records(text) {
            match f[0] {
                "v" => {
                    let i: usize = snapshot::field(&f, 1, line)?;
                    if i >= items {
                        return Err(bad(line, "item out of range"));
                    }
                    model.counts[i] = snapshot::field(&f, 2, line)?;
                }
                "c" => {
                    let a: usize = snapshot::field(&f, 1, line)?;
                    let b: usize = snapshot::field(&f, 2, line)?;
                    let c: u64 = snapshot::field(&f, 3, line)?;
                    if a >= b || b >= items || c == 0 {
                        return Err(bad(line, "malformed co-occurrence record"));
                    }
                    model.cooc[a].insert(b, c);
                    model.cooc[b].insert(a, c);
                }
                "l" => {
                    let a: usize = snapshot::field(&f, 1, line)?;
                    let b: usize = snapshot::field(&f, 2, line)?;
                    let l: f64 = snapshot::field(&f, 3, line)?;
                    if a >= items || b >= items {
                        return Err(bad(line, "similarity index out of range"));
                    }
                    model.sim[a].insert(b, l);
                }
                tag => return Err(bad(line, &format!("unknown record tag `{tag}`"))),
            }
        }
        model.check_invariants().map_err(ModelError::Snapshot)?;
        Ok(model)
    }
}

/// Descending by score, ascending by index on ties.
pub(crate) fn sort_ranked(entries: &mut [(usize, f64)]) {
    entries.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
}
