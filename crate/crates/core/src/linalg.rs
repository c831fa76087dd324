//! Small dense and banded linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalue floor, relative to the largest eigenvalue, below which a
/// symmetric matrix is treated as singular rather than pseudo-inverted.
pub const SPD_EIG_FLOOR: f64 = 1e-12;

/// Symmetrize in place: `(a + a^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest absolute asymmetry `max |a_ij - a_ji|`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Eigen-decomposition of a symmetric matrix, returning `(values, vectors)`
/// with eigenvalues sorted ascending and eigenvectors as matching columns.
pub fn sym_eigen_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = symmetrize(a).symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix together with a unit eigenvector.
pub fn min_eig_pair(a: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let (values, vectors) = sym_eigen_sorted(a);
    (values[0], vectors.column(0).into_owned())
}

/// Inverse symmetric square root `a^{-1/2}` of an SPD matrix.
///
/// Eigenvalues below `SPD_EIG_FLOOR` times the largest eigenvalue produce a
/// singular-metric error instead of a pseudo-inverse.
pub fn inv_sqrt_spd(a: &DMatrix<f64>, at: &[f64]) -> Result<DMatrix<f64>> {
    let (values, vectors) = sym_eigen_sorted(a);
    let max = values.last().copied().unwrap_or(0.0);
    if !(max > 0.0) || values[0] <= SPD_EIG_FLOOR * max {
        return Err(Error::SingularMetric {
            point: at.to_vec(),
            detail: format!("eigenvalue range [{:e}, {:e}]", values[0], max),
        });
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|v| 1.0 / v.sqrt()),
    ));
    Ok(&vectors * d * vectors.transpose())
}

/// Symmetric square root of an SPD matrix.
pub fn sqrt_spd(a: &DMatrix<f64>, at: &[f64]) -> Result<DMatrix<f64>> {
    let (values, vectors) = sym_eigen_sorted(a);
    let max = values.last().copied().unwrap_or(0.0);
    if !(max > 0.0) || values[0] <= SPD_EIG_FLOOR * max {
        return Err(Error::SingularMetric {
            point: at.to_vec(),
            detail: format!("eigenvalue range [{:e}, {:e}]", values[0], max),
        });
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|v| v.sqrt()),
    ));
    Ok(&vectors * d * vectors.transpose())
}

/// Solve `a x = b` for SPD `a` via Cholesky; singular matrices report the
/// evaluation point in the error.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, at: &[f64]) -> Result<DVector<f64>> {
    symmetrize(a)
        .cholesky()
        .map(|ch| ch.solve(b))
        .ok_or_else(|| Error::SingularMetric {
            point: at.to_vec(),
            detail: "Cholesky factorization failed".into(),
        })
}

/// Inverse of an SPD matrix via Cholesky; failure reports the evaluation
/// point as a singular-metric error.
pub fn solve_spd_inverse(a: &DMatrix<f64>, at: &[f64]) -> Result<DMatrix<f64>> {
    symmetrize(a)
        .cholesky()
        .map(|ch| ch.inverse())
        .ok_or_else(|| Error::SingularMetric {
            point: at.to_vec(),
            detail: "Cholesky factorization failed".into(),
        })
}

/// Operator (spectral) norm via singular values.
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().svd(false, false).singular_values.max()
}

/// Solve a tridiagonal system in place (Thomas algorithm).
///
/// `lower[i]` couples row `i+1` to `i`, `upper[i]` couples row `i` to `i+1`.
/// The system is overwritten; returns the solution vector.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    assert_eq!(lower.len(), n - 1);
    assert_eq!(upper.len(), n - 1);
    assert_eq!(rhs.len(), n);
    let mut c = vec![0.0; n - 1];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::NumericDomain("tridiagonal pivot is zero".into()));
    }
    if n > 1 {
        c[0] = upper[0] / denom;
    }
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::NumericDomain("tridiagonal pivot is zero".into()));
        }
        if i < n - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Conjugate gradient for a matrix-free SPD operator.
///
/// `apply` computes `y = A x`. Iterates until the relative residual drops
/// below `tol` or `max_iter` is reached.
pub fn conjugate_gradient<F>(
    apply: F,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut x = x0.to_vec();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        if rs.sqrt() <= tol * bnorm {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::NumericDomain(
                "conjugate gradient lost positive definiteness".into(),
            ));
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    if rs.sqrt() <= tol * bnorm * 10.0 {
        Ok(x)
    } else {
        Err(Error::Convergence {
            residual: rs.sqrt() / bnorm,
            iterations: max_iter,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inv_sqrt_reconstructs_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = inv_sqrt_spd(&a, &[0.0, 0.0]).unwrap();
        let inv = &s * &s;
        let id = &inv * &a;
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(inv_sqrt_spd(&a, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn thomas_solves_small_system() {
        // [2 1 0; 1 2 1; 0 1 2] x = [4, 8, 8]
        let x = solve_tridiagonal(&[1.0, 1.0], &[2.0, 2.0, 2.0], &[1.0, 1.0], &[4.0, 8.0, 8.0])
            .unwrap();
        let expect = [1.0, 2.0, 3.0];
        for (xi, ei) in x.iter().zip(expect.iter()) {
            assert!((xi - ei).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_matches_direct_solve() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let b = vec![1.0, 2.0, 3.0];
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..3 {
                y[i] = (0..3).map(|j| a[(i, j)] * x[j]).sum();
            }
        };
        let x = conjugate_gradient(apply, &b, &[0.0; 3], 1e-14, 100).unwrap();
        let direct = a
            .clone()
            .cholesky()
            .unwrap()
            .solve(&DVector::from_vec(b.clone()));
        for i in 0..3 {
            assert!((x[i] - direct[i]).abs() < 1e-10);
        }
    }
}
