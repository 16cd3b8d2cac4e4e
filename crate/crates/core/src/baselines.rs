//! Reference classifiers: brute-force k-nearest-neighbor on raw features
//! and dense label propagation on the exact kernel at small scale.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nystrom::{rbf, KernelParams};

/// Row-count guard for the dense n-by-n kernel path.
pub const DENSE_LP_LIMIT: usize = 20_000;

/// Labeled training set for nearest-neighbor queries.
#[derive(Debug, Clone)]
pub struct NeighborQuery {
    points: Array2<f64>,
    labels: Vec<i8>,
    num_neighbors: usize,
}

impl NeighborQuery {
    pub fn new(points: Array2<f64>, labels: Vec<i8>, num_neighbors: usize) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        if points.nrows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: points.nrows(),
                right: labels.len(),
            });
        }
        if num_neighbors == 0 || num_neighbors > points.nrows() {
            return Err(Error::InvalidParameter(format!(
                "num_neighbors must lie in [1, {}], got {num_neighbors}",
                points.nrows()
            )));
        }
        if labels.iter().any(|&l| l != -1 && l != 1) {
            return Err(Error::InvalidParameter(
                "training labels must be -1 or +1".into(),
            ));
        }
        Ok(NeighborQuery {
            points,
            labels,
            num_neighbors,
        })
    }

    pub fn num_neighbors(&self) -> usize {
        self.num_neighbors
    }
}

/// Majority vote over the nearest training points. Distance ties break
/// toward the lower training index, vote ties toward +1.
pub fn knn_predict(query: ArrayView1<'_, f64>, nq: &NeighborQuery) -> i8 {
    let n = nq.points.nrows();
    let d = nq.points.ncols();
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        let mut sq = 0.0;
        for c in 0..d {
            let diff = query[c] - nq.points[[i, c]];
            sq += diff * diff;
        }
        dists.push((sq, i));
    }
    dists.sort_unstable_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    let votes: i32 = dists[..nq.num_neighbors]
        .iter()
        .map(|&(_, i)| i32::from(nq.labels[i]))
        .sum();
    if votes < 0 {
        -1
    } else {
        1
    }
}

/// Predicts a batch of queries, thread-parallel over rows.
pub fn knn_predict_batch(queries: ArrayView2<'_, f64>, nq: &NeighborQuery) -> Vec<i8> {
    let rows: Vec<usize> = (0..queries.nrows()).collect();
    rows.par_iter()
        .map(|&i| knn_predict(queries.row(i), nq))
        .collect()
}

/// Kernel choice for the dense baseline.
#[derive(Debug, Clone, Copy)]
pub enum BaselineKernel {
    Rbf(KernelParams),
    /// Inner-product kernel; negative entries are clamped at zero before
    /// normalization so row degrees stay positive.
    Linear,
}

/// Dense label propagation on the exact kernel: builds the full n-by-n
/// similarity matrix, normalizes it symmetrically and iterates
/// `f <- alpha S f + (1 - alpha) f0` from `f0` until the maximum change
/// drops below `tol`. Refuses inputs beyond [`DENSE_LP_LIMIT`] rows.
pub fn full_lp(
    x: ArrayView2<'_, f64>,
    f0: &[f64],
    alpha: f64,
    kernel: &BaselineKernel,
    max_iter: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let n = x.nrows();
    if n > DENSE_LP_LIMIT {
        return Err(Error::DenseLpRefused {
            rows: n,
            limit: DENSE_LP_LIMIT,
        });
    }
    if f0.len() != n {
        return Err(Error::LengthMismatch {
            left: f0.len(),
            right: n,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "propagation weight must lie in (0, 1), got {alpha}"
        )));
    }
    let s = normalized_kernel(x, kernel)?;
    let mut f = f0.to_vec();
    for _ in 0..max_iter {
        let mut max_change = 0.0f64;
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += s[[i, j]] * f[j];
            }
            next[i] = alpha * acc + (1.0 - alpha) * f0[i];
            max_change = max_change.max((next[i] - f[i]).abs());
        }
        f = next;
        if max_change < tol {
            break;
        }
    }
    Ok(f)
}

/// Builds `S = D^{-1/2} W D^{-1/2}` for the requested kernel.
pub fn normalized_kernel(
    x: ArrayView2<'_, f64>,
    kernel: &BaselineKernel,
) -> Result<Array2<f64>> {
    let n = x.nrows();
    let mut w = match kernel {
        BaselineKernel::Rbf(params) => {
            let mut w = Array2::<f64>::zeros((n, n));
            let rows: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| (0..n).map(|j| rbf(x.row(i), x.row(j), params)).collect())
                .collect();
            for (i, row) in rows.into_iter().enumerate() {
                for (j, v) in row.into_iter().enumerate() {
                    w[[i, j]] = v;
                }
            }
            w
        }
        BaselineKernel::Linear => {
            let mut w = crate::linalg::par_matmul(x, x.t());
            w.mapv_inplace(|v| v.max(0.0));
            w
        }
    };
    let mut inv_sqrt_deg = vec![0.0; n];
    for i in 0..n {
        let deg: f64 = (0..n).map(|j| w[[i, j]]).sum();
        if !(deg > 0.0) {
            return Err(Error::DegenerateRowDegree { row: i });
        }
        inv_sqrt_deg[i] = 1.0 / deg.sqrt();
    }
    for i in 0..n {
        for j in 0..n {
            w[[i, j]] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }
    Ok(w)
}

/// Fraction of matching labels.
pub fn accuracy(predicted: &[i8], truth: &[i8]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::InvalidParameter(
            "accuracy of empty vectors is undefined".into(),
        ));
    }
    let hits = predicted
        .iter()
        .zip(truth)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}
