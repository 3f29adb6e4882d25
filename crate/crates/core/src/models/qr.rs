//! Rank-one update of a square QR factorization with Givens rotations.
//!
//! Given `A = QR`, computes `Q'R' = A + u·vᵀ` in O(d²):
//!
//! 1. `w = Qᵀu`.
//! 2. Rotate `w` onto `‖w‖·e₀` from the bottom up; the same rotations turn
//!    `R` upper Hessenberg and are accumulated into `Q`.
//! 3. Add `w₀·vᵀ` to the first row of the Hessenberg matrix.
//! 4. Chase the subdiagonal away with a second sweep of rotations.

use nalgebra::{DMatrix, DVector};

use crate::error::ModelError;

/// Rotation `[c s; -s c]` that maps `(a, b)` to `(r, 0)`.
#[derive(Debug, Clone, Copy)]
struct Givens {
    c: f64,
    s: f64,
}

impl Givens {
    fn zeroing(a: f64, b: f64) -> (Givens, f64) {
        if b == 0.0 {
            return (Givens { c: 1.0, s: 0.0 }, a);
        }
        let r = a.hypot(b);
        (Givens { c: a / r, s: b / r }, r)
    }

    /// Rotates rows `i` and `i + 1` of `m` over columns `from..`.
    fn rows(&self, m: &mut DMatrix<f64>, i: usize, from: usize) -> u64 {
        let n = m.ncols();
        for j in from..n {
            let x = m[(i, j)];
            let y = m[(i + 1, j)];
            m[(i, j)] = self.c * x + self.s * y;
            m[(i + 1, j)] = -self.s * x + self.c * y;
        }
        6 * (n - from) as u64
    }

    /// Applies the transpose on the right to columns `j` and `j + 1`.
    fn cols(&self, m: &mut DMatrix<f64>, j: usize) -> u64 {
        let n = m.nrows();
        for i in 0..n {
            let x = m[(i, j)];
            let y = m[(i, j + 1)];
            m[(i, j)] = self.c * x + self.s * y;
            m[(i, j + 1)] = -self.s * x + self.c * y;
        }
        6 * n as u64
    }
}

fn check_dims(
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<usize, ModelError> {
    let d = q.nrows();
    if !q.is_square() || r.shape() != (d, d) || u.len() != d || v.len() != d {
        return Err(ModelError::InputDomain(format!(
            "rank-one update dimension mismatch: Q {:?}, R {:?}, u {}, v {}",
            q.shape(),
            r.shape(),
            u.len(),
            v.len()
        )));
    }
    Ok(d)
}

/// Updates `(q, r)` in place so that `q·r` factors `A + u·vᵀ`.
///
/// Returns the number of primitive operations performed.
pub fn qr_rank_one(
    q: &mut DMatrix<f64>,
    r: &mut DMatrix<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<u64, ModelError> {
    let d = check_dims(q, r, u, v)?;
    let w = q.tr_mul(u);
    let ops = (d * d) as u64;
    Ok(ops + qr_rank_one_projected(q, r, w, v)?)
}

/// Same as [`qr_rank_one`] with `w = Qᵀu` already computed.
pub fn qr_rank_one_projected(
    q: &mut DMatrix<f64>,
    r: &mut DMatrix<f64>,
    mut w: DVector<f64>,
    v: &DVector<f64>,
) -> Result<u64, ModelError> {
    let d = check_dims(q, r, &w, v)?;
    if d == 0 {
        return Ok(0);
    }
    let mut ops = 0u64;

    for k in (1..d).rev() {
        let (g, rho) = Givens::zeroing(w[k - 1], w[k]);
        w[k - 1] = rho;
        w[k] = 0.0;
        ops += 6;
        ops += g.rows(r, k - 1, k - 1);
        ops += g.cols(q, k - 1);
    }

    for j in 0..d {
        r[(0, j)] += w[0] * v[j];
    }
    ops += 2 * d as u64;

    for k in 0..d - 1 {
        let (g, _) = Givens::zeroing(r[(k, k)], r[(k + 1, k)]);
        ops += 6;
        ops += g.rows(r, k, k);
        r[(k + 1, k)] = 0.0;
        ops += g.cols(q, k);
    }
    Ok(ops)
}

/// `max |QᵀQ − I|`.
pub fn orthogonality_drift(q: &DMatrix<f64>) -> f64 {
    let qtq = q.tr_mul(q);
    let mut worst = 0.0f64;
    for i in 0..qtq.nrows() {
        for j in 0..qtq.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((qtq[(i, j)] - target).abs());
        }
    }
    worst
}

/// Whether every entry strictly below the diagonal is exactly zero.
pub fn is_upper_triangular(r: &DMatrix<f64>) -> bool {
    (0..r.nrows()).all(|i| (0..i.min(r.ncols())).all(|j| r[(i, j)] == 0.0))
}

/// Solves `R x = y` for upper-triangular `R` by back substitution.
pub(crate) fn back_substitute(r: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, u64) {
    let d = y.len();
    let mut x = DVector::zeros(d);
    let mut ops = 0u64;
    for i in (0..d).rev() {
        let mut acc = y[i];
        for j in i + 1..d {
            acc -= r[(i, j)] * x[j];
        }
        x[i] = acc / r[(i, i)];
        ops += (d - i) as u64;
    }
    (x, ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    /// Independent oracle: factor from scratch with Householder QR.
    fn refactor(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let qr = a.clone().qr();
        (qr.q(), qr.r())
    }

    #[test]
    fn zero_update_leaves_factors() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let (mut q, mut r) = refactor(&a);
        let (q0, r0) = (q.clone(), r.clone());
        qr_rank_one(
            &mut q,
            &mut r,
            &DVector::zeros(3),
            &DVector::from_vec(vec![1.0, 2.0, 3.0]),
        )
        .unwrap();
        assert!(max_abs(&(&q - &q0)) < 1e-15);
        assert!(max_abs(&(&r - &r0)) < 1e-15);
    }

    #[test]
    fn identity_plus_e1_outer() {
        let mut q = DMatrix::identity(2, 2);
        let mut r = DMatrix::identity(2, 2);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        qr_rank_one(&mut q, &mut r, &e1, &e1).unwrap();
        let target = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(max_abs(&(&q * &r - &target)) < 1e-14);
        assert!(is_upper_triangular(&r));
        assert!(orthogonality_drift(&q) < 1e-15);
        // R is unique up to row signs
        assert!((r[(0, 0)].abs() - 2.0).abs() < 1e-14);
        assert!((r[(1, 1)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_update_matches_refactorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 8;
        for _ in 0..20 {
            let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
            let u = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let v = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let (mut q, mut r) = refactor(&a);
            let ops = qr_rank_one(&mut q, &mut r, &u, &v).unwrap();
            assert!(ops > 0);
            let target = &a + &u * v.transpose();
            let resid = max_abs(&(&q * &r - &target));
            assert!(resid <= 1e-10 * max_abs(&a), "residual {resid}");
            assert!(is_upper_triangular(&r));
            assert!(orthogonality_drift(&q) < 1e-12);
            // agrees with factoring the target from scratch up to row signs
            let (_, r_ref) = refactor(&target);
            for i in 0..d {
                for j in i..d {
                    let sign = r[(i, i)].signum() * r_ref[(i, i)].signum();
                    assert!((r[(i, j)] - sign * r_ref[(i, j)]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn op_count_is_quadratic_in_dimension() {
        let count = |d: usize| {
            let mut q = DMatrix::identity(d, d);
            let mut r = DMatrix::identity(d, d);
            let u = DVector::from_element(d, 0.5);
            qr_rank_one(&mut q, &mut r, &u, &u).unwrap()
        };
        let (a, b) = (count(16), count(32));
        let ratio = b as f64 / a as f64;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut q = DMatrix::identity(2, 2);
        let mut r = DMatrix::identity(2, 2);
        let u = DVector::zeros(3);
        assert!(qr_rank_one(&mut q, &mut r, &u, &u).is_err());
    }

    #[test]
    fn back_substitution_solves() {
        let r = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, -1.0, 0.0, 3.0, 2.0, 0.0, 0.0, 4.0]);
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let y = &r * &x;
        let (sol, _) = back_substitute(&r, &y);
        assert!((sol - x).norm() < 1e-14);
    }
}
