//! Count-based multinomial naive Bayes.
//!
//! All state is integer counts, so forgetting a row is exact subtraction.

use serde::{Deserialize, Serialize};

use super::snapshot::{self, Header};
use super::{DvfsHook, ModelKind, OpReport};
use crate::error::ModelError;

/// One training row: class label and sparse feature counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MnbRow {
    pub label: usize,
    pub features: Vec<(usize, u64)>,
}

#[derive(Debug, Clone)]
pub struct MnbModel {
    classes: usize,
    vocab: usize,
    alpha: f64,
    class_counts: Vec<u64>,
    feature_counts: Vec<Vec<u64>>,
    class_totals: Vec<u64>,
    op_counter: u64,
}

impl PartialEq for MnbModel {
    fn eq(&self, other: &Self) -> bool {
        self.classes == other.classes
            && self.vocab == other.vocab
            && self.alpha == other.alpha
            && self.class_counts == other.class_counts
            && self.feature_counts == other.feature_counts
    }
}

impl MnbModel {
    pub fn new(classes: usize, vocab: usize, alpha: f64) -> Result<Self, ModelError> {
        if classes == 0 {
            return Err(ModelError::InputDomain(
                "at least one class required".into(),
            ));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ModelError::InputDomain(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            classes,
            vocab,
            alpha,
            class_counts: vec![0; classes],
            feature_counts: vec![vec![0; vocab]; classes],
            class_totals: vec![0; classes],
            op_counter: 0,
        })
    }

    pub fn empty_like(&self) -> Self {
        Self::new(self.classes, self.vocab, self.alpha).expect("parameters already validated")
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn class_count(&self, class: usize) -> u64 {
        self.class_counts[class]
    }

    pub fn feature_count(&self, class: usize, feature: usize) -> u64 {
        self.feature_counts[class][feature]
    }

    pub fn documents(&self) -> u64 {
        self.class_counts.iter().sum()
    }

    pub fn op_counter(&self) -> u64 {
        self.op_counter
    }

    fn check_row(&self, row: &MnbRow) -> Result<(), ModelError> {
        if row.label >= self.classes {
            return Err(ModelError::InputDomain(format!(
                "class {} out of range for {} classes",
                row.label, self.classes
            )));
        }
        self.check_features(&row.features)
    }

    fn check_features(&self, features: &[(usize, u64)]) -> Result<(), ModelError> {
        if let Some(&(f, _)) = features.iter().find(|(f, _)| *f >= self.vocab) {
            return Err(ModelError::InputDomain(format!(
                "feature {f} out of range for vocabulary {}",
                self.vocab
            )));
        }
        Ok(())
    }

    // Layout: class counts, class totals, then the classes × vocab table.
    fn count_addr(&self, class: usize) -> u64 {
        class as u64
    }

    fn total_addr(&self, class: usize) -> u64 {
        (self.classes + class) as u64
    }

    fn feature_addr(&self, class: usize, feature: usize) -> u64 {
        (2 * self.classes + class * self.vocab + feature) as u64
    }

    pub fn update(&mut self, row: &MnbRow) -> Result<OpReport, ModelError> {
        self.check_row(row)?;
        let mut rep = self.apply(row, true);
        rep.hooks.push(DvfsHook::Up);
        Ok(rep)
    }

    /// Subtracts a previously added row; the model is unchanged on error.
    pub fn forget(&mut self, row: &MnbRow) -> Result<OpReport, ModelError> {
        self.check_row(row)?;
        let c = row.label;
        if self.class_counts[c] == 0 {
            return Err(ModelError::Consistency(format!(
                "class {c} has no documents to forget"
            )));
        }
        let mut needed = std::collections::BTreeMap::new();
        for &(f, n) in &row.features {
            *needed.entry(f).or_insert(0u64) += n;
        }
        for (&f, &n) in &needed {
            if self.feature_counts[c][f] < n {
                return Err(ModelError::Consistency(format!(
                    "feature {f} of class {c} would become negative"
                )));
            }
        }
        let mut rep = self.apply(row, false);
        rep.hooks.push(DvfsHook::Down);
        Ok(rep)
    }

    fn apply(&mut self, row: &MnbRow, add: bool) -> OpReport {
        let c = row.label;
        let mut rep = OpReport::default();
        let step = |x: &mut u64, n: u64| {
            if add {
                *x += n
            } else {
                *x -= n
            }
        };
        step(&mut self.class_counts[c], 1);
        rep.ops += 1;
        rep.touch(self.count_addr(c));
        let mut total = 0;
        for &(f, n) in &row.features {
            step(&mut self.feature_counts[c][f], n);
            total += n;
            rep.ops += 1;
            rep.touch(self.feature_addr(c, f));
        }
        step(&mut self.class_totals[c], total);
        rep.ops += 1;
        rep.touch(self.total_addr(c));
        self.op_counter += rep.ops;
        rep
    }

    /// Rebuilds from scratch. Clearing the table is counted as work.
    pub fn retrain<'a, I>(&mut self, rows: I) -> Result<OpReport, ModelError>
    where
        I: IntoIterator<Item = &'a MnbRow>,
    {
        let rows: Vec<&MnbRow> = rows.into_iter().collect();
        for row in &rows {
            self.check_row(row)?;
        }
        let counter = self.op_counter;
        *self = self.empty_like();
        let mut rep = OpReport::default();
        let cells = (2 * self.classes + self.classes * self.vocab) as u64;
        rep.ops += cells;
        rep.touch_span(0, cells);
        for row in rows {
            let r = self.apply(row, true);
            rep.absorb(r);
        }
        self.op_counter = counter + rep.ops;
        Ok(rep)
    }

    pub fn from_rows<'a, I>(
        classes: usize,
        vocab: usize,
        alpha: f64,
        rows: I,
    ) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = &'a MnbRow>,
    {
        let mut model = Self::new(classes, vocab, alpha)?;
        model.retrain(rows)?;
        Ok(model)
    }

    /// Per-class log posterior (up to a shared constant). Classes without
    /// documents score `-inf`.
    pub fn log_posteriors(&self, features: &[(usize, u64)]) -> Result<Vec<f64>, ModelError> {
        self.check_features(features)?;
        let docs = self.documents();
        Ok((0..self.classes)
            .map(|c| {
                if self.class_counts[c] == 0 {
                    return f64::NEG_INFINITY;
                }
                let prior = (self.class_counts[c] as f64 / docs as f64).ln();
                let denom = self.class_totals[c] as f64 + self.alpha * self.vocab as f64;
                features.iter().fold(prior, |acc, &(f, n)| {
                    let p = (self.feature_counts[c][f] as f64 + self.alpha) / denom;
                    acc + n as f64 * p.ln()
                })
            })
            .collect())
    }

    /// Most probable class; ties (and an empty model) resolve to the lowest
    /// class index.
    pub fn predict(&self, features: &[(usize, u64)]) -> Result<usize, ModelError> {
        let scores = self.log_posteriors(features)?;
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        Ok(best)
    }

    /// Signed count changes; fails (without modifying) if any count would go
    /// negative.
    pub fn apply_counts(
        &mut self,
        d_class: &std::collections::BTreeMap<usize, i64>,
        d_features: &std::collections::BTreeMap<(usize, usize), i64>,
    ) -> Result<OpReport, ModelError> {
        for (&c, &d) in d_class {
            if c >= self.classes {
                return Err(ModelError::InputDomain(format!("class {c} out of range")));
            }
            if self.class_counts[c] as i64 + d < 0 {
                return Err(ModelError::Consistency(format!(
                    "class {c} count would become negative"
                )));
            }
        }
        let mut d_totals = vec![0i64; self.classes];
        for (&(c, f), &d) in d_features {
            if c >= self.classes || f >= self.vocab {
                return Err(ModelError::InputDomain(format!(
                    "feature cell ({c}, {f}) out of range"
                )));
            }
            if self.feature_counts[c][f] as i64 + d < 0 {
                return Err(ModelError::Consistency(format!(
                    "feature {f} of class {c} would become negative"
                )));
            }
            d_totals[c] += d;
        }
        let mut rep = OpReport::default();
        for (&c, &d) in d_class {
            self.class_counts[c] = (self.class_counts[c] as i64 + d) as u64;
            rep.ops += 1;
            rep.touch(self.count_addr(c));
        }
        for (&(c, f), &d) in d_features {
            self.feature_counts[c][f] = (self.feature_counts[c][f] as i64 + d) as u64;
            rep.ops += 1;
            rep.touch(self.feature_addr(c, f));
        }
        for (c, d) in d_totals.into_iter().enumerate() {
            if d != 0 {
                self.class_totals[c] = (self.class_totals[c] as i64 + d) as u64;
                rep.ops += 1;
                rep.touch(self.total_addr(c));
            }
        }
        self.op_counter += rep.ops;
        Ok(rep)
    }

    /// Smoothed `P(feature | class)`.
    pub fn feature_probability(&self, class: usize, feature: usize) -> f64 {
        let denom = self.class_totals[class] as f64 + self.alpha * self.vocab as f64;
        (self.feature_counts[class][feature] as f64 + self.alpha) / denom
    }

    pub fn to_snapshot(&self) -> String {
        use std::fmt::Write;
        let mut out = snapshot::header_line(
            ModelKind::Mnb,
            &[
                ("classes", self.classes.to_string()),
                ("vocab", self.vocab.to_string()),
                ("alpha", self.alpha.to_string()),
            ],
        );
        for (c, &n) in self.class_counts.iter().enumerate() {
            if n > 0 {
                let _ = writeln!(out, "n {c} {n}");
            }
        }
        for (c, row) in self.feature_counts.iter().enumerate() {
            for (f, &n) in row.iter().enumerate() {
                if n > 0 {
                    let _ = writeln!(out, "f {c} {f} {n}");
                }
            }
        }
        out
    }

    pub fn from_snapshot(text: &str) -> Result<Self, ModelError> {
        let header = Header::parse(text)?;
        header.expect_kind(ModelKind::Mnb)?;
        let mut model = Self::new(
            header.get("classes")?,
            header.get("vocab")?,
            header.get("alpha")?,
        )
        .map_err(|e| ModelError::Snapshot(e.to_string()))?;
        for (line, f) in snapshot::records(text) {
            let c: usize = snapshot::field(&f, 1, line)?;
            if c >= model.classes {
                return Err(ModelError::Snapshot(format!(
                    "line {line}: class out of range"
                )));
            }
            match f[0] {
                "n" => model.class_counts[c] = snapshot::field(&f, 2, line)?,
                "f" => {
                    let feat: usize = snapshot::field(&f, 2, line)?;
                    if feat >= model.vocab {
                        return Err(ModelError::Snapshot(format!(
                            "line {line}: feature out of range"
                        )));
                    }
                    let n: u64 = snapshot::field(&f, 3, line)?;
                    model.feature_counts[c][feat] = n;
                    model.class_totals[c] += n;
                }
                tag => {
                    return Err(ModelError::Snapshot(format!(
                        "line {line}: unknown record tag `{tag}`"
                    )))
                }
            }
        }
        Ok(model)
    }
}
