//! Small dense linear-algebra kernels: blocked parallel matmul, a cyclic
//! Jacobi eigensolver for symmetric matrices, LU solves and Cholesky.
//!
//! Everything here is deterministic: parallel products are split into
//! fixed-size row blocks so the summation order never depends on the
//! thread count, and the Jacobi sweep order is a pure function of the
//! input.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray::linalg::general_mat_mul;
use ndarray::parallel::prelude::*;

use crate::error::{Error, Result};

/// Row-block size for parallel products. Fixed so results do not depend
/// on how many threads happen to be available.
const MATMUL_BLOCK: usize = 256;

/// `a * b`, parallelized over row blocks of `a`.
pub fn par_matmul(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    let mut out = Array2::<f64>::zeros((a.nrows(), b.ncols()));
    out.axis_chunks_iter_mut(Axis(0), MATMUL_BLOCK)
        .into_par_iter()
        .zip(a.axis_chunks_iter(Axis(0), MATMUL_BLOCK).into_par_iter())
        .for_each(|(mut oc, ac)| {
            general_mat_mul(1.0, &ac, &b, 0.0, &mut oc);
        });
    out
}

/// Squared Frobenius norm.
pub fn frob_sq(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Element-wise inner product of two equally shaped matrices.
pub fn mat_dot(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "mat_dot shape mismatch");
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues sorted in
/// descending order and eigenvectors in the matching columns. Input
/// asymmetry is symmetrized as `(A + A^T)/2` before sweeping.
pub fn sym_eig(a: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "sym_eig needs a square matrix");
    let mut m = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    let mut v = Array2::<f64>::eye(n);
    if n <= 1 {
        return (m.diag().to_owned(), v);
    }

    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() <= 1e-14 * (frob_sq(m.view()).sqrt() + 1e-300) {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                // Stable rotation angle per Golub & Van Loan.
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[[j, j]]
            .partial_cmp(&m[[i, i]])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let vals = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vecs = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vecs.column_mut(dst).assign(&v.column(src));
    }
    (vals, vecs)
}

/// Solves `A x = b` for square `A` by LU with partial pivoting.
pub fn lu_solve(a: ArrayView2<'_, f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "lu_solve needs a square matrix");
    assert_eq!(n, b.len(), "lu_solve rhs length mismatch");
    let mut lu = a.to_owned();
    let mut x = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();

    for col in 0..n {
        let mut pivot = col;
        let mut best = lu[[col, col]].abs();
        for row in col + 1..n {
            let cand = lu[[row, col]].abs();
            if cand > best {
                best = cand;
                pivot = row;
            }
        }
        if best < 1e-300 || !best.is_finite() {
            return Err(Error::WoodburySolveFailed);
        }
        if pivot != col {
            perm.swap(pivot, col);
            for j in 0..n {
                let tmp = lu[[col, j]];
                lu[[col, j]] = lu[[pivot, j]];
                lu[[pivot, j]] = tmp;
            }
            x.swap(pivot, col);
        }
        let diag = lu[[col, col]];
        for row in col + 1..n {
            let factor = lu[[row, col]] / diag;
            lu[[row, col]] = factor;
            for j in col + 1..n {
                lu[[row, j]] -= factor * lu[[col, j]];
            }
            x[row] -= factor * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = x[row];
        for j in row + 1..n {
            acc -= lu[[row, j]] * x[j];
        }
        x[row] = acc / lu[[row, row]];
    }
    Ok(x)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky needs a square matrix");
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if acc <= 0.0 {
                    return Err(Error::InvalidParameter(
                        "cholesky: matrix not positive definite".into(),
                    ));
                }
                l[[i, j]] = acc.sqrt();
            } else {
                l[[i, j]] = acc / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Spectral radius of `F F^T` estimated by power iteration on the factor,
/// without forming the n-by-n product.
pub fn spectral_radius_gram(f: ArrayView2<'_, f64>, iters: usize) -> f64 {
    let n = f.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::<f64>::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = f.t().dot(&v);
        let mut u = f.dot(&w);
        let norm = u.dot(&u).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        u.mapv_inplace(|x| x / norm);
        lambda = norm;
        v = u;
    }
    lambda
}

/// Spectral radius of a dense symmetric matrix by power iteration.
pub fn spectral_radius_dense(a: ArrayView2<'_, f64>, iters: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::<f64>::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..iters {
        let mut u = a.dot(&v);
        let norm = u.dot(&u).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        u.mapv_inplace(|x| x / norm);
        lambda = norm;
        v = u;
    }
    lambda
}

/// Ordinary least squares fit of `y ~ c0 + c1 * x`, returning `(c0, c1, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let c1 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c0 = my - c1 * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - (c0 + c1 * a);
            e * e
        })
        .sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (c0, c1, r2)
}
