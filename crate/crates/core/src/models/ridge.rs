//! Tikhonov-regularized least squares with exact forget.
//!
//! Keeps `z = Mᵀr` and a QR factorization of the regularized gram matrix
//! `MᵀM + λI`. Adding or removing an observation `(m, r)` is a rank-one
//! update `±m·mᵀ` of the factorization followed by a triangular solve
//! `R h = Qᵀz`, all in O(d²).
//!
//! The gram matrix itself is also accumulated so the factorization can be
//! rebuilt when it loses orthogonality or its diagonal degenerates.

use nalgebra::{DMatrix, DVector};

use super::qr::{back_substitute, orthogonality_drift, qr_rank_one_projected};
use super::snapshot::{self, Header};
use super::{DvfsHook, ModelKind, OpReport};
use crate::error::ModelError;

/// Refactorize when any `|R_ii|` falls below this fraction of `max |R|`.
pub const DIAGONAL_FLOOR: f64 = 1e-12;
/// Refactorize when `max |QᵀQ − I|` exceeds this.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-8;
/// Full orthogonality checks run every this many rank-one steps.
pub const ORTHOGONALITY_CHECK_INTERVAL: u64 = 64;

#[derive(Debug, Clone)]
pub struct RidgeModel {
    dim: usize,
    lambda: f64,
    z: DVector<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    h: DVector<f64>,
    gram: DMatrix<f64>,
    rows: u64,
    steps_since_check: u64,
    refactor_count: u64,
    op_counter: u64,
    maintenance_ops: u64,
}

impl PartialEq for RidgeModel {
    /// Exact equality of the logical state (counters excluded).
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.lambda == other.lambda
            && self.rows == other.rows
            && self.z == other.z
            && self.q == other.q
            && self.r == other.r
            && self.h == other.h
            && self.gram == other.gram
    }
}

impl RidgeModel {
    pub fn new(dim: usize, lambda: f64) -> Result<Self, ModelError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ModelError::InputDomain(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let gram = DMatrix::identity(dim, dim) * lambda;
        Ok(Self {
            dim,
            lambda,
            z: DVector::zeros(dim),
            q: DMatrix::identity(dim, dim),
            r: gram.clone(),
            h: DVector::zeros(dim),
            gram,
            rows: 0,
            steps_since_check: 0,
            refactor_count: 0,
            op_counter: 0,
            maintenance_ops: 0,
        })
    }

    pub fn empty_like(&self) -> Self {
        Self::new(self.dim, self.lambda).expect("lambda already validated")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Solved weight vector.
    pub fn weights(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Accumulated `MᵀM + λI`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Number of incorporated observations.
    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn refactor_count(&self) -> u64 {
        self.refactor_count
    }

    pub fn op_counter(&self) -> u64 {
        self.op_counter
    }

    /// Work spent on health checks and refactorizations (not in `op_counter`).
    pub fn maintenance_ops(&self) -> u64 {
        self.maintenance_ops
    }

    fn check_row(&self, row: &[f64]) -> Result<(), ModelError> {
        if row.len() != self.dim {
            return Err(ModelError::InputDomain(format!(
                "observation has {} features, model expects {}",
                row.len(),
                self.dim
            )));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::InputDomain(
                "observation contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    // Layout: z, h, Q (row-major), R (row-major), gram.
    fn z_addr(&self) -> u64 {
        0
    }

    fn h_addr(&self) -> u64 {
        self.dim as u64
    }

    fn q_addr(&self) -> u64 {
        2 * self.dim as u64
    }

    fn r_addr(&self) -> u64 {
        let d = self.dim as u64;
        2 * d + d * d
    }

    fn gram_addr(&self) -> u64 {
        let d = self.dim as u64;
        2 * d + 2 * d * d
    }

    /// Incorporates observation `(row, target)`.
    pub fn update(&mut self, row: &[f64], target: f64) -> Result<OpReport, ModelError> {
        self.step(row, target, 1.0, Some(DvfsHook::Up))
    }

    /// Removes a previously incorporated observation.
    pub fn forget(&mut self, row: &[f64], target: f64) -> Result<OpReport, ModelError> {
        if self.rows == 0 {
            return Err(ModelError::Consistency("no observations to forget".into()));
        }
        self.step(row, target, -1.0, Some(DvfsHook::Down))
    }

    fn step(
        &mut self,
        row: &[f64],
        target: f64,
        sign: f64,
        hook: Option<DvfsHook>,
    ) -> Result<OpReport, ModelError> {
        self.check_row(row)?;
        if !target.is_finite() {
            return Err(ModelError::InputDomain("non-finite target".into()));
        }
        let d = self.dim as u64;
        let m = DVector::from_column_slice(row);
        let mut rep = OpReport::default();

        self.z.axpy(sign * target, &m, 1.0);
        rep.ops += 2 * d;
        rep.touch_span(self.z_addr(), d);

        self.rank_one_term(&m, sign, &mut rep)?;
        self.solve(&mut rep);

        if sign > 0.0 {
            self.rows += 1;
        } else {
            self.rows -= 1;
        }
        if let Some(h) = hook {
            rep.hooks.push(h);
        }
        self.op_counter += rep.ops;
        Ok(rep)
    }

    /// Applies `gram += sign·m·mᵀ` to the factorization (without re-solving).
    fn rank_one_term(
        &mut self,
        m: &DVector<f64>,
        sign: f64,
        rep: &mut OpReport,
    ) -> Result<(), ModelError> {
        let d = self.dim as u64;
        let w = self.q.tr_mul(m) * sign;
        rep.ops += d * d;
        rep.touch_span(self.q_addr(), d * d);
        rep.ops += qr_rank_one_projected(&mut self.q, &mut self.r, w, m)?;
        rep.touch_span(self.r_addr(), d * d);
        rep.touch_span(self.q_addr(), d * d);

        self.gram.ger(sign, m, m, 1.0);
        self.maintenance_ops += d * d;
        rep.touch_span(self.gram_addr(), d * d);

        self.steps_since_check += 1;
        self.ensure_healthy();
        Ok(())
    }

    /// `h = R⁻¹ Qᵀ z`.
    fn solve(&mut self, rep: &mut OpReport) {
        let d = self.dim as u64;
        let y = self.q.tr_mul(&self.z);
        rep.ops += d * d;
        let (h, ops) = back_substitute(&self.r, &y);
        rep.ops += ops;
        self.h = h;
        rep.touch_span(self.r_addr(), d * d);
        rep.touch_span(self.h_addr(), d);
    }

    fn diagonal_degenerate(&self) -> bool {
        let scale = self.r.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if !scale.is_finite() {
            return true;
        }
        (0..self.dim).any(|i| {
            let rii = self.r[(i, i)];
            !rii.is_finite() || rii.abs() < DIAGONAL_FLOOR * scale
        })
    }

    fn ensure_healthy(&mut self) {
        let d = self.dim as u64;
        self.maintenance_ops += d;
        let mut broken = self.diagonal_degenerate();
        if !broken && self.steps_since_check >= ORTHOGONALITY_CHECK_INTERVAL {
            self.steps_since_check = 0;
            self.maintenance_ops += d * d * d;
            broken = !(orthogonality_drift(&self.q) <= ORTHOGONALITY_TOLERANCE);
        }
        if broken {
            self.refactor();
        }
    }

    /// Rebuilds `Q`, `R` from the accumulated gram matrix.
    pub fn refactor(&mut self) {
        let d = self.dim as u64;
        let qr = self.gram.clone().qr();
        self.q = qr.q();
        self.r = qr.r();
        for i in 0..self.dim {
            for j in 0..i {
                self.r[(i, j)] = 0.0;
            }
        }
        self.refactor_count += 1;
        self.steps_since_check = 0;
        self.maintenance_ops += 4 * d * d * d / 3;
    }

    /// Applies a batch of signed rank-one terms and a `z` increment, then
    /// re-solves once. Used to merge sufficient-statistic deltas.
    pub fn apply_terms(
        &mut self,
        dz: &[f64],
        terms: &[(f64, Vec<f64>)],
    ) -> Result<OpReport, ModelError> {
        if dz.len() != self.dim {
            return Err(ModelError::InputDomain(format!(
                "z delta has {} entries, model expects {}",
                dz.len(),
                self.dim
            )));
        }
        for (sign, row) in terms {
            self.check_row(row)?;
            if *sign != 1.0 && *sign != -1.0 {
                return Err(ModelError::InputDomain(format!(
                    "rank-one sign must be ±1, got {sign}"
                )));
            }
        }
        let removals = terms.iter().filter(|(s, _)| *s < 0.0).count() as u64;
        let additions = terms.len() as u64 - removals;
        if self.rows + additions < removals {
            return Err(ModelError::Consistency(
                "delta removes more observations than incorporated".into(),
            ));
        }
        let d = self.dim as u64;
        let mut rep = OpReport::default();
        for (sign, row) in terms {
            let m = DVector::from_column_slice(row);
            self.rank_one_term(&m, *sign, &mut rep)?;
        }
        for (zi, di) in self.z.iter_mut().zip(dz) {
            *zi += di;
        }
        rep.ops += d;
        rep.touch_span(self.z_addr(), d);
        self.rows = self.rows + additions - removals;
        self.solve(&mut rep);
        self.op_counter += rep.ops;
        Ok(rep)
    }

    /// Replaces the state by a from-scratch build over `rows`: accumulate the
    /// gram matrix and `z`, factor once, solve.
    pub fn retrain<'a, I>(&mut self, rows: I) -> Result<OpReport, ModelError>
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let rows: Vec<(&[f64], f64)> = rows.into_iter().collect();
        for (row, target) in &rows {
            self.check_row(row)?;
            if !target.is_finite() {
                return Err(ModelError::InputDomain("non-finite target".into()));
            }
        }
        let d = self.dim as u64;
        let mut rep = OpReport::default();
        let mut gram = DMatrix::identity(self.dim, self.dim) * self.lambda;
        let mut z = DVector::zeros(self.dim);
        for (row, target) in &rows {
            let m = DVector::from_column_slice(row);
            gram.ger(1.0, &m, &m, 1.0);
            z.axpy(*target, &m, 1.0);
            rep.ops += d * d + 2 * d;
            rep.touch_span(self.gram_addr(), d * d);
            rep.touch_span(self.z_addr(), d);
        }
        let qr = gram.clone().qr();
        self.q = qr.q();
        self.r = qr.r();
        for i in 0..self.dim {
            for j in 0..i {
                self.r[(i, j)] = 0.0;
            }
        }
        rep.ops += 4 * d * d * d / 3;
        rep.touch_span(self.gram_addr(), d * d);
        rep.touch_span(self.q_addr(), 2 * d * d);
        self.gram = gram;
        self.z = z;
        self.rows = rows.len() as u64;
        self.steps_since_check = 0;
        self.solve(&mut rep);
        self.op_counter += rep.ops;
        Ok(rep)
    }

    /// Builds a model from scratch.
    pub fn from_rows<'a, I>(dim: usize, lambda: f64, rows: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let mut model = Self::new(dim, lambda)?;
        model.retrain(rows)?;
        Ok(model)
    }

    /// `hᵀ m`.
    pub fn predict(&self, m: &[f64]) -> Result<f64, ModelError> {
        if m.len() != self.dim {
            return Err(ModelError::InputDomain(format!(
                "query has {} features, model expects {}",
                m.len(),
                self.dim
            )));
        }
        Ok(self.h.iter().zip(m).map(|(a, b)| a * b).sum())
    }

    /// `max |QR − gram| / max |gram|`.
    pub fn factor_residual(&self) -> f64 {
        let diff = &self.q * &self.r - &self.gram;
        let num = diff.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let den = self.gram.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        num / den.max(f64::MIN_POSITIVE)
    }

    /// `‖R h − Qᵀz‖ / max(‖Qᵀz‖, ε)`.
    pub fn solve_residual(&self) -> f64 {
        let y = self.q.tr_mul(&self.z);
        let resid = &self.r * &self.h - &y;
        resid.norm() / y.norm().max(f64::EPSILON)
    }

    pub fn orthogonality_drift(&self) -> f64 {
        orthogonality_drift(&self.q)
    }

    pub fn to_snapshot(&self) -> String {
        use std::fmt::Write;
        let mut out = snapshot::header_line(
            ModelKind::Ridge,
            &[
                ("dim", self.dim.to_string()),
                ("lambda", self.lambda.to_string()),
                ("rows", self.rows.to_string()),
            ],
        );
        for (i, x) in self.z.iter().enumerate() {
            let _ = writeln!(out, "z {i} {x}");
        }
        for (i, x) in self.h.iter().enumerate() {
            let _ = writeln!(out, "h {i} {x}");
        }
        for i in 0..self.dim {
            for j in 0..self.dim {
                let _ = writeln!(out, "q {i} {j} {}", self.q[(i, j)]);
            }
        }
        for i in 0..self.dim {
            for j in i..self.dim {
                let _ = writeln!(out, "r {i} {j} {}", self.r[(i, j)]);
            }
        }
        for i in 0..self.dim {
            for j in i..self.dim {
                let _ = writeln!(out, "g {i} {j} {}", self.gram[(i, j)]);
            }
        }
        out
    }

    pub fn from_snapshot(text: &str) -> Result<Self, ModelError> {
        let header = Header::parse(text)?;
        header.expect_kind(ModelKind::Ridge)?;
        let dim: usize = header.get("dim")?;
        let lambda: f64 = header.get("lambda")?;
        let mut model = Self::new(dim, lambda).map_err(|e| ModelError::Snapshot(e.to_string()))?;
        model.rows = header.get("rows")?;
        let bad = |line: usize| ModelError::Snapshot(format!("line {line}: index out of range"));
        for (line, f) in snapshot::records(text) {
            let i: usize = snapshot::field(&f, 1, line)?;
            if i >= dim {
                return Err(bad(line));
            }
            match f[0] {
                "z" => model.z[i] = snapshot::field(&f, 2, line)?,
                "h" => model.h[i] = snapshot::field(&f, 2, line)?,
                "q" | "r" | "g" => {
                    let j: usize = snapshot::field(&f, 2, line)?;
                    let x: f64 = snapshot::field(&f, 3, line)?;
                    if j >= dim || (f[0] != "q" && j < i) {
                        return Err(bad(line));
                    }
                    match f[0] {
                        "q" => model.q[(i, j)] = x,
                        "r" => model.r[(i, j)] = x,
                        _ => {
                            model.gram[(i, j)] = x;
                            model.gram[(j, i)] = x;
                        }
                    }
                }
                tag => {
                    return Err(ModelError::Snapshot(format!(
                        "line {line}: unknown record tag `{tag}`"
                    )));
                }
            }
        }
        Ok(model)
    }
}
