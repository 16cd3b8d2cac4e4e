//! Feature shifting and symmetric low-rank normalization, written as SPMD
//! collectives over row chunks.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::runtime::{RowPartitionedMatrix, WorkerGroup};

/// Shifts each feature so its global minimum becomes zero, leaving columns
/// that are already nonnegative untouched. Pairwise differences within a
/// column are preserved exactly.
///
/// Columns are checked for NaN/Inf first; a non-finite entry anywhere
/// aborts the whole group with `Error::NonFiniteFeature`.
pub fn par_shift(group: &WorkerGroup, x: &RowPartitionedMatrix) -> Result<RowPartitionedMatrix> {
    x.check_group(group)?;
    let cols = x.cols();
    let results = group.run(|worker| -> Result<Array2<f64>> {
        let chunk = x.chunk(worker.rank());

        // Non-finite scan: every rank reports the smallest offending column
        // index (or +inf), so all ranks agree on the verdict.
        let mut bad_col = f64::INFINITY;
        'scan: for j in 0..cols {
            for i in 0..chunk.nrows() {
                if !chunk[[i, j]].is_finite() {
                    bad_col = j as f64;
                    break 'scan;
                }
            }
        }
        let bad = worker.allreduce_min(&[bad_col])?[0];
        if bad.is_finite() {
            return Err(Error::NonFiniteFeature { col: bad as usize });
        }

        let mut local_min = vec![f64::INFINITY; cols];
        for i in 0..chunk.nrows() {
            for j in 0..cols {
                local_min[j] = local_min[j].min(chunk[[i, j]]);
            }
        }
        let col_min = worker.allreduce_min(&local_min)?;

        let mut out = chunk.to_owned();
        for (j, &m) in col_min.iter().enumerate() {
            if m < 0.0 {
                for i in 0..out.nrows() {
                    out[[i, j]] -= m;
                }
            }
        }
        Ok(out)
    });
    collect_chunks(x, results)
}

/// Normalizes a nonnegative factor `F` so that `Fbar Fbar^T` equals the
/// symmetric normalization `D^{-1/2} (F F^T) D^{-1/2}` of the Gram graph:
/// each row is divided by the square root of its degree `F_{i,:} . colSum`.
///
/// A row whose degree is not strictly positive aborts the group with
/// `Error::DegenerateRowDegree` naming the smallest offending global row.
pub fn par_normalize(
    group: &WorkerGroup,
    f: &RowPartitionedMatrix,
) -> Result<RowPartitionedMatrix> {
    f.check_group(group)?;
    let cols = f.cols();
    let results = group.run(|worker| -> Result<Array2<f64>> {
        let rank = worker.rank();
        let chunk = f.chunk(rank);
        let offset = f.range(rank).start;

        let mut local_sum = vec![0.0; cols];
        for i in 0..chunk.nrows() {
            for j in 0..cols {
                local_sum[j] += chunk[[i, j]];
            }
        }
        let col_sum = worker.allreduce_sum(&local_sum)?;

        let mut degrees = Vec::with_capacity(chunk.nrows());
        let mut bad_row = f64::INFINITY;
        for i in 0..chunk.nrows() {
            let mut deg = 0.0;
            for j in 0..cols {
                deg += chunk[[i, j]] * col_sum[j];
            }
            if !(deg > 0.0) && bad_row.is_infinite() {
                bad_row = (offset + i) as f64;
            }
            degrees.push(deg);
        }
        let bad = worker.allreduce_min(&[bad_row])?[0];
        if bad.is_finite() {
            return Err(Error::DegenerateRowDegree { row: bad as usize });
        }

        let mut out = chunk.to_owned();
        for (i, deg) in degrees.iter().enumerate() {
            let scale = 1.0 / deg.sqrt();
            for j in 0..cols {
                out[[i, j]] *= scale;
            }
        }
        Ok(out)
    });
    collect_chunks(f, results)
}

fn collect_chunks(
    input: &RowPartitionedMatrix,
    results: Vec<Result<Array2<f64>>>,
) -> Result<RowPartitionedMatrix> {
    let mut chunks = Vec::with_capacity(results.len());
    for r in results {
        chunks.push(r?);
    }
    Ok(RowPartitionedMatrix::from_chunks(
        input.ranges().to_vec(),
        chunks,
    ))
}
