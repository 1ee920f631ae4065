//! Minimum-norm least squares for (possibly underdetermined) dense systems.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff used for rank decisions.
pub const RANK_RTOL: f64 = 1e-10;

/// Minimum-norm least-squares solution of `a x ~ b`.
///
/// Wide systems with full row rank use `x = a^T (a a^T)^-1 b` with a
/// Cholesky factor and one step of iterative refinement. The Gram matrix
/// squares the condition number, so callers should equilibrate rows first.
/// Anything that fails the pivot or residual checks falls back to SVD.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.nrows() <= a.ncols() {
        if let Some(x) = full_row_rank_solve(a, b) {
            return x;
        }
    }
    svd_solve(a, b)
}

fn full_row_rank_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let at = a.transpose();
    let chol = (a * &at).cholesky()?;
    let pivots = chol.l_dirty().diagonal();
    let (lo, hi) = (pivots.min(), pivots.max());
    if lo <= 0.0 || lo * lo <= hi * hi * RANK_RTOL {
        return None;
    }
    let mut x = &at * chol.solve(b);
    let residual = b - a * &x;
    x += &at * chol.solve(&residual);
    let scale = b.norm().max(f64::MIN_POSITIVE);
    ((b - a * &x).norm() <= 1e-8 * scale).then_some(x)
}

/// Minimum-norm least-squares solution via SVD with the rank cutoff.
pub fn svd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let cutoff = cutoff(svd.singular_values.as_slice(), a.nrows().max(a.ncols()));
    svd.solve(b, cutoff).expect("U and V were computed")
}

/// Numerical rank of `a`.
pub fn rank(a: &DMatrix<f64>) -> usize {
    let sv = a.singular_values();
    let cutoff = cutoff(sv.as_slice(), a.nrows().max(a.ncols()));
    sv.iter().filter(|&&s| s > cutoff).count()
}

fn cutoff(singular_values: &[f64], dim: usize) -> f64 {
    let largest = singular_values.iter().cloned().fold(0.0, f64::max);
    largest * RANK_RTOL.max(dim as f64 * f64::EPSILON)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent route for full-row-rank systems: thin QR of `A^T`,
    /// `x = Q R^-T b`.
    fn qr_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        let qr = a.transpose().qr();
        let y = qr.r().transpose().solve_lower_triangular(b).expect("full row rank");
        qr.q() * y
    }

    #[test]
    fn matches_qr_route_on_wide_systems() {
        let a = DMatrix::from_row_slice(3, 5, &[
            1.0, 2.0, 0.0, -1.0, 3.0,
            0.0, 1.0, 4.0, 2.0, -1.0,
            2.0, 0.0, 1.0, 1.0, 1.0,
        ]);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = min_norm_solve(&a, &b);
        let oracle = qr_min_norm(&a, &b);
        assert!((&x - &oracle).norm() < 1e-12);
        assert!((svd_solve(&a, &b) - &oracle).norm() < 1e-12);
        assert!((&a * &x - &b).norm() < 1e-12);
        assert_eq!(rank(&a), 3);
    }

    #[test]
    fn single_equation() {
        // x1 + x2 = 2 has minimum-norm solution (1, 1)
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let x = min_norm_solve(&a, &DVector::from_vec(vec![2.0]));
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_rows() {
        // duplicated row: rank 1, solution still minimum norm
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0]);
        assert_eq!(rank(&a), 1);
        let x = min_norm_solve(&a, &DVector::from_vec(vec![4.0, 4.0]));
        assert!((x[0] - 2.0).abs() < 1e-12 && x[1].abs() < 1e-12 && (x[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn solution_lies_in_the_row_space() {
        let a = DMatrix::from_fn(6, 10, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + if i == j { 3.0 } else { 0.0 });
        let b = DVector::from_fn(6, |i, _| i as f64 - 2.5);
        let x = min_norm_solve(&a, &b);
        assert!((&a * &x - &b).norm() < 1e-10);
        assert!((&x - qr_min_norm(&a, &b)).norm() < 1e-10);
        // projecting onto the leading right singular vectors leaves x unchanged
        let v_t = a.clone().svd(false, true).v_t.unwrap();
        let basis = v_t.rows(0, rank(&a)).transpose();
        assert!((&x - &basis * (basis.transpose() * &x)).norm() < 1e-10);
    }
}
