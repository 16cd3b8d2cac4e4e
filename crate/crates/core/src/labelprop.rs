//! Label propagation through the normalized low-rank graph.
//!
//! The iterative scheme diffuses scores as
//! `f <- alpha * Fbar (Fbar^T f) + (1 - alpha) * f0`, one length-k
//! allreduce per step, so a pass costs O(nk). The closed form solves the
//! same fixed point through the matrix-inversion lemma with a single
//! k-by-k solve.

use ndarray::ArrayView2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, par_matmul};
use crate::runtime::{concat_chunks, partition_vector, RowPartitionedMatrix, WorkerGroup};

/// Score magnitude beyond which the iteration is declared divergent.
const DIVERGENCE_GUARD: f64 = 1e12;

/// Initial labeling and propagation weight.
///
/// `f0` holds -1/+1 on labeled rows and 0 elsewhere; `alpha` in (0, 1)
/// trades graph smoothing against fidelity to the initial labels.
#[derive(Debug, Clone)]
pub struct LabelState {
    pub f0: Vec<f64>,
    pub alpha: f64,
}

impl LabelState {
    pub fn new(f0: Vec<f64>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "propagation weight must lie in (0, 1), got {alpha}"
            )));
        }
        if let Some(bad) = f0.iter().find(|&&v| v != -1.0 && v != 0.0 && v != 1.0) {
            return Err(Error::InvalidParameter(format!(
                "initial labels must be -1, 0 or +1, got {bad}"
            )));
        }
        Ok(LabelState { f0, alpha })
    }
}

/// Result of an iterative propagation run.
#[derive(Debug, Clone)]
pub struct LpOutcome {
    /// Converged (or budget-limited) score vector, in global row order.
    pub scores: Vec<f64>,
    /// Global `max |f_new - f_old|` per iteration.
    pub step_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterative propagation over a normalized row-partitioned factor.
///
/// Scores start from a seeded uniform [-1, 1] draw over the global row
/// order (the fixed point does not depend on the start while the map
/// contracts) and iterate until the global maximum change drops below
/// `tol` or `max_iter` is reached. Blowing past the divergence guard
/// aborts the whole group with `Error::PropagationDiverged`.
pub fn iterate(
    group: &WorkerGroup,
    fbar: &RowPartitionedMatrix,
    state: &LabelState,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<LpOutcome> {
    fbar.check_group(group)?;
    if state.f0.len() != fbar.rows() {
        return Err(Error::LengthMismatch {
            left: state.f0.len(),
            right: fbar.rows(),
        });
    }
    let k = fbar.cols();
    let alpha = state.alpha;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init: Vec<f64> = (0..fbar.rows())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let init_chunks = partition_vector(fbar.ranges(), &init);
    let f0_chunks = partition_vector(fbar.ranges(), &state.f0);

    let results = group.run(|worker| -> Result<(Vec<f64>, Vec<f64>, usize, bool)> {
        let rank = worker.rank();
        let chunk = fbar.chunk(rank);
        let f0 = &f0_chunks[rank];
        let mut f = init_chunks[rank].clone();
        let mut steps = Vec::new();
        let mut iterations = 0;
        let mut converged = false;

        for _ in 0..max_iter {
            let mut tmp = vec![0.0; k];
            for i in 0..chunk.nrows() {
                let fi = f[i];
                for j in 0..k {
                    tmp[j] += chunk[[i, j]] * fi;
                }
            }
            let tmp = worker.allreduce_sum(&tmp)?;

            let mut step_local = 0.0f64;
            let mut peak_local = 0.0f64;
            for i in 0..chunk.nrows() {
                let mut acc = 0.0;
                for j in 0..k {
                    acc += chunk[[i, j]] * tmp[j];
                }
                let next = alpha * acc + (1.0 - alpha) * f0[i];
                step_local = step_local.max((next - f[i]).abs());
                peak_local = peak_local.max(next.abs());
                f[i] = next;
            }
            let reduced = worker.allreduce_max(&[step_local, peak_local])?;
            iterations += 1;
            steps.push(reduced[0]);
            if !reduced[1].is_finite() || reduced[1] > DIVERGENCE_GUARD {
                return Err(Error::PropagationDiverged);
            }
            if reduced[0] < tol {
                converged = true;
                break;
            }
        }
        Ok((f, steps, iterations, converged))
    });

    let mut chunks = Vec::with_capacity(results.len());
    let mut steps = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    for r in results {
        let (chunk, s, it, conv) = r?;
        chunks.push(chunk);
        steps = s;
        iterations = it;
        converged = conv;
    }
    Ok(LpOutcome {
        scores: concat_chunks(&chunks),
        step_history: steps,
        iterations,
        converged,
    })
}

/// Closed-form fixed point `f* = (1 - alpha)(I - alpha Fbar Fbar^T)^{-1} f0`
/// computed through the matrix-inversion lemma:
/// `f* = (1 - alpha) [f0 - Fbar (Fbar^T Fbar - I/alpha)^{-1} (Fbar^T f0)]`,
/// so only a k-by-k system is solved. A rank-0, gathered-data tool.
pub fn closed_form(fbar: ArrayView2<'_, f64>, f0: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "propagation weight must lie in (0, 1), got {alpha}"
        )));
    }
    if f0.len() != fbar.nrows() {
        return Err(Error::LengthMismatch {
            left: f0.len(),
            right: fbar.nrows(),
        });
    }
    let k = fbar.ncols();
    let mut z = vec![0.0; k];
    for i in 0..fbar.nrows() {
        for j in 0..k {
            z[j] += fbar[[i, j]] * f0[i];
        }
    }
    let mut small = par_matmul(fbar.t(), fbar);
    for j in 0..k {
        small[[j, j]] -= 1.0 / alpha;
    }
    let w = lu_solve(small.view(), &z)?;
    let mut out = Vec::with_capacity(f0.len());
    for i in 0..fbar.nrows() {
        let mut acc = 0.0;
        for j in 0..k {
            acc += fbar[[i, j]] * w[j];
        }
        out.push((1.0 - alpha) * (f0[i] - acc));
    }
    Ok(out)
}

/// Sign classification of the masked rows; a zero score breaks to +1.
pub fn classify(scores: &[f64], test_mask: &[bool]) -> Vec<i8> {
    scores
        .iter()
        .zip(test_mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| if s < 0.0 { -1 } else { 1 })
        .collect()
}
