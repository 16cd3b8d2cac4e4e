//! Nonnegative low-rank graph learning.
//!
//! Learns an n-by-k factor `F >= 0` minimizing the reconstruction error
//! `Q(F) = ||X - F F^T X||^2`, so that `F F^T` acts as a similarity graph
//! in which every point is rebuilt as a linear combination of all points.
//! Two optimizers are provided: the multiplicative update rule
//! `F <- F . sqrt(2B / (D + G))` and Nesterov-accelerated projected
//! gradient descent with backtracking line search.
//!
//! Both run shared-memory only: products are parallelized over fixed row
//! blocks, and the whole optimization is a single-caller, run-to-completion
//! operation.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{frob_sq, mat_dot, par_matmul};

/// Division guard for the multiplicative denominator.
const DENOM_GUARD: f64 = 1e-12;

/// Accelerated projected gradient parameters.
#[derive(Debug, Clone, Copy)]
pub struct ApgdParams {
    /// Outer iteration budget.
    pub max_iter: usize,
    /// Backtracking candidates per outer iteration.
    pub max_inner_iter: usize,
    /// Line-search shrink factor in (0, 1).
    pub beta: f64,
    /// Sufficient-decrease constant in (0, 1).
    pub ls_sigma: f64,
    /// Stationarity fraction: stop when the projected gradient norm falls
    /// below `epsilon` times the initial gradient norm.
    pub epsilon: f64,
    /// Relative objective-change stop.
    pub tol: f64,
}

impl Default for ApgdParams {
    fn default() -> Self {
        ApgdParams {
            max_iter: 200,
            max_inner_iter: 20,
            beta: 0.1,
            ls_sigma: 0.01,
            epsilon: 1e-4,
            tol: 1e-5,
        }
    }
}

impl ApgdParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.max_inner_iter == 0 {
            return Err(Error::InvalidParameter(
                "APGD iteration budgets must be at least 1".into(),
            ));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "line-search shrink must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if !(self.ls_sigma > 0.0 && self.ls_sigma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sufficient-decrease constant must lie in (0, 1), got {}",
                self.ls_sigma
            )));
        }
        if self.epsilon < 0.0 || self.tol < 0.0 {
            return Err(Error::InvalidParameter(
                "epsilon and tol must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Why an optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Projected gradient norm fell under the stationarity fraction.
    Stationary,
    /// Relative objective change fell under `tol`.
    ObjectiveChange,
    /// Maximum element-wise change of `F` fell under `tol`.
    MaxChange,
    /// Iteration budget exhausted.
    MaxIter,
}

/// One per-iteration trace row: `(iteration, objective, gradient norm,
/// step size)`. For the multiplicative rule the step column carries the
/// maximum element-wise change instead of a step length.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// Output of either optimizer.
#[derive(Debug, Clone)]
pub struct GlnpResult {
    pub factor: Array2<f64>,
    pub records: Vec<IterationRecord>,
    pub final_objective: f64,
    pub stop: StopReason,
    /// Outer iterations whose line search ran out of candidates without
    /// satisfying the sufficient-decrease inequality (APGD only).
    pub line_search_exhaustions: usize,
    /// Momentum sequence, starting at gamma_1 = 1 (APGD only).
    pub gammas: Vec<f64>,
}

/// `||X - F F^T X||^2`, evaluated without forming the n-by-n product:
/// with `P = X^T F` and `M = F^T F` the value is
/// `||X||^2 - 2||P||^2 + <P M, P>`, an O(nmk) computation.
pub fn objective(x: ArrayView2<'_, f64>, f: ArrayView2<'_, f64>) -> f64 {
    let p = par_matmul(x.t(), f);
    let m = par_matmul(f.t(), f);
    objective_from_parts(frob_sq(x), p.view(), m.view())
}

fn objective_from_parts(x_sq: f64, p: ArrayView2<'_, f64>, m: ArrayView2<'_, f64>) -> f64 {
    let pm = par_matmul(p, m);
    (x_sq - 2.0 * frob_sq(p) + mat_dot(pm.view(), p)).max(0.0)
}

/// Gradient `2 F F^T X X^T F + 2 X X^T F F^T F - 4 X X^T F`, assembled in
/// the factored order `2D + 2G - 4B` with `B = X(X^T F)`, `D = F(F^T B)`,
/// `G = B(F^T F)` so the cost stays O(nk(m+k)).
pub fn gradient(x: ArrayView2<'_, f64>, f: ArrayView2<'_, f64>) -> Array2<f64> {
    let p = par_matmul(x.t(), f);
    let b = par_matmul(x, p.view());
    gradient_from_b(f, b.view())
}

fn gradient_from_b(f: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let ff = par_matmul(f.t(), f);
    let fb = par_matmul(f.t(), b);
    let d = par_matmul(f, fb.view());
    let g = par_matmul(b, ff.view());
    let mut out = d;
    out.zip_mut_with(&g, |dv, gv| *dv = 2.0 * *dv + 2.0 * gv);
    out.zip_mut_with(&b, |v, bv| *v -= 4.0 * bv);
    out
}

/// Projected gradient for the nonnegativity constraint: full gradient at
/// interior entries, only the descent-feasible (negative) part at the
/// boundary `F_ij = 0`.
pub fn projected_gradient(grad: ArrayView2<'_, f64>, f: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = grad.to_owned();
    out.zip_mut_with(&f, |g, &fv| {
        if fv <= 0.0 {
            *g = g.min(0.0);
        }
    });
    out
}

/// Uniform [0, 1) initial factor from a seeded generator.
pub fn random_factor(n: usize, k: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * k).map(|_| rng.random_range(0.0..1.0)).collect();
    Array2::from_shape_vec((n, k), data).expect("shape matches data")
}

fn check_nonnegative(x: ArrayView2<'_, f64>) -> Result<()> {
    if x.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "GLNP requires a nonnegative finite input; run par_shift first".into(),
        ));
    }
    Ok(())
}

/// Multiplicative-update optimizer starting from a seeded uniform factor.
pub fn multiplicative(
    x: ArrayView2<'_, f64>,
    k: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<GlnpResult> {
    let f0 = random_factor(x.nrows(), k, seed);
    multiplicative_from(x, f0, max_iter, tol)
}

/// Multiplicative-update optimizer from an explicit nonnegative start.
/// Stops when the maximum element-wise change of `F` drops below `tol`
/// or the iteration budget runs out.
pub fn multiplicative_from(
    x: ArrayView2<'_, f64>,
    f0: Array2<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<GlnpResult> {
    check_nonnegative(x)?;
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    let x_sq = frob_sq(x);
    let mut f = f0;
    let mut records = Vec::new();
    let mut stop = StopReason::MaxIter;

    for t in 0..max_iter {
        let p = par_matmul(x.t(), f.view());
        let b = par_matmul(x, p.view());
        let ff = par_matmul(f.t(), f.view());
        let fb = par_matmul(f.t(), b.view());
        let d = par_matmul(f.view(), fb.view());
        let g = par_matmul(b.view(), ff.view());

        let obj = objective_from_parts(x_sq, p.view(), ff.view());
        let mut grad_sq = 0.0;
        let mut max_change = 0.0f64;
        for ((fv, &bv), (&dv, &gv)) in f.iter_mut().zip(b.iter()).zip(d.iter().zip(g.iter())) {
            let grad = 2.0 * dv + 2.0 * gv - 4.0 * bv;
            grad_sq += grad * grad;
            let denom = (dv + gv).max(DENOM_GUARD);
            let next = *fv * (2.0 * bv / denom).sqrt();
            max_change = max_change.max((next - *fv).abs());
            *fv = next;
        }
        records.push(IterationRecord {
            iteration: t,
            objective: obj,
            grad_norm: grad_sq.sqrt(),
            step: max_change,
        });
        if max_change < tol {
            stop = StopReason::MaxChange;
            break;
        }
    }

    let final_objective = objective(x, f.view());
    Ok(GlnpResult {
        factor: f,
        records,
        final_objective,
        stop,
        line_search_exhaustions: 0,
        gammas: Vec::new(),
    })
}

/// Accelerated projected gradient optimizer starting from a seeded
/// uniform factor.
pub fn apgd(
    x: ArrayView2<'_, f64>,
    k: usize,
    params: &ApgdParams,
    seed: u64,
) -> Result<GlnpResult> {
    let f0 = random_factor(x.nrows(), k, seed);
    apgd_from(x, f0, params)
}

/// Accelerated projected gradient descent from an explicit start.
///
/// Steps `F^t = P[Y^t - alpha_t grad Q(Y^t) / ||grad Q(Y^t)||]` with the
/// Frobenius-normalized direction; `alpha_t` starts at 1 and shrinks by
/// `beta` until the sufficient-decrease inequality (tested with the
/// unnormalized gradient) holds. Momentum follows
/// `gamma_{t+1} = (1 + sqrt(1 + 4 gamma_t^2)) / 2`. Stops on projected
/// gradient stationarity relative to the start, on small relative
/// objective change, or on the iteration budget. An exhausted line search
/// accepts the last candidate and is counted in the diagnostics.
pub fn apgd_from(
    x: ArrayView2<'_, f64>,
    f0: Array2<f64>,
    params: &ApgdParams,
) -> Result<GlnpResult> {
    check_nonnegative(x)?;
    params.validate()?;
    let x_sq = frob_sq(x);

    let grad0 = gradient(x, f0.view());
    let g0_norm = frob_sq(grad0.view()).sqrt();
    let obj0 = objective(x, f0.view());
    let mut records = vec![IterationRecord {
        iteration: 0,
        objective: obj0,
        grad_norm: g0_norm,
        step: 0.0,
    }];
    if g0_norm == 0.0 {
        // Stationary start; nothing to do.
        return Ok(GlnpResult {
            factor: f0,
            records,
            final_objective: obj0,
            stop: StopReason::Stationary,
            line_search_exhaustions: 0,
            gammas: vec![1.0],
        });
    }

    let mut f = f0;
    let mut y = f.clone();
    let mut gamma = 1.0f64;
    let mut gammas = vec![gamma];
    let mut exhaustions = 0usize;
    let mut prev_obj: Option<f64> = None;
    let mut stop = StopReason::MaxIter;

    for t in 1..=params.max_iter {
        let p = par_matmul(x.t(), y.view());
        let b = par_matmul(x, p.view());
        let yy = par_matmul(y.t(), y.view());
        let obj_y = objective_from_parts(x_sq, p.view(), yy.view());
        let grad = gradient_from_b(y.view(), b.view());
        let grad_norm = frob_sq(grad.view()).sqrt();
        if grad_norm == 0.0 {
            f = y;
            stop = StopReason::Stationary;
            break;
        }

        // Backtracking line search on the normalized direction; the
        // sufficient-decrease test uses the unnormalized gradient.
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut last = None;
        for _ in 0..params.max_inner_iter {
            let mut candidate = y.clone();
            candidate.zip_mut_with(&grad, |c, &g| {
                *c = (*c - alpha * g / grad_norm).max(0.0);
            });
            let p1 = par_matmul(x.t(), candidate.view());
            let m1 = par_matmul(candidate.t(), candidate.view());
            let obj1 = objective_from_parts(x_sq, p1.view(), m1.view());
            let mut descent = 0.0;
            for (g, (c, yv)) in grad.iter().zip(candidate.iter().zip(y.iter())) {
                descent += g * (c - yv);
            }
            let step = alpha;
            last = Some((candidate, p1, obj1, step));
            if obj1 - obj_y <= params.ls_sigma * descent {
                accepted = last.take();
                break;
            }
            alpha *= params.beta;
        }
        let exhausted = accepted.is_none();
        if exhausted {
            exhaustions += 1;
        }
        let (candidate, p1, obj1, step) = accepted.or(last).expect("at least one candidate");

        let f_prev = std::mem::replace(&mut f, candidate);
        let gamma_next = 0.5 * (1.0 + (1.0 + 4.0 * gamma * gamma).sqrt());
        let momentum = (gamma - 1.0) / gamma_next;
        y = &f + &((&f - &f_prev) * momentum);
        gamma = gamma_next;
        gammas.push(gamma);
        records.push(IterationRecord {
            iteration: t,
            objective: obj1,
            grad_norm,
            step,
        });

        // Stationarity at the accepted point, reusing P1 = X^T F.
        let b1 = par_matmul(x, p1.view());
        let grad_f = gradient_from_b(f.view(), b1.view());
        let pg_norm = frob_sq(projected_gradient(grad_f.view(), f.view()).view()).sqrt();
        if pg_norm <= params.epsilon * g0_norm {
            stop = StopReason::Stationary;
            break;
        }
        if let Some(po) = prev_obj {
            if (obj1 - po).abs() <= params.tol * obj1.abs().max(f64::MIN_POSITIVE) {
                stop = StopReason::ObjectiveChange;
                break;
            }
        }
        prev_obj = Some(obj1);
    }

    let final_objective = objective(x, f.view());
    Ok(GlnpResult {
        factor: f,
        records,
        final_objective,
        stop,
        line_search_exhaustions: exhaustions,
        gammas,
    })
}

/// Writes per-iteration records as `iteration,objective,grad_norm,step`
/// CSV rows, the format consumed by the convergence plots.
pub fn write_convergence_csv<W: Write>(records: &[IterationRecord], mut out: W) -> Result<()> {
    writeln!(out, "iteration,objective,grad_norm,step")?;
    for r in records {
        writeln!(
            out,
            "{},{:.17e},{:.17e},{:.17e}",
            r.iteration, r.objective, r.grad_norm, r.step
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn random_nonneg(n: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..2.0))
    }

    /// Independent objective oracle: forms the residual directly with
    /// naive loops instead of the optimized trace expansion.
    fn objective_oracle(x: &Array2<f64>, f: &Array2<f64>) -> f64 {
        let gram = f.dot(&f.t());
        let rec = gram.dot(x);
        let mut q = 0.0;
        for (a, b) in x.iter().zip(rec.iter()) {
            let d = a - b;
            q += d * d;
        }
        q
    }

    #[test]
    fn objective_zero_factor_is_input_norm() {
        let x = random_nonneg(6, 4, 1);
        let f = Array2::<f64>::zeros((6, 2));
        assert!((objective(x.view(), f.view()) - frob_sq(x.view())).abs() < 1e-12);
    }

    #[test]
    fn objective_orthonormal_square_factor_is_zero() {
        let x = random_nonneg(3, 2, 2);
        let f = Array2::<f64>::eye(3);
        assert!(objective(x.view(), f.view()) < 1e-20);
    }

    #[test]
    fn objective_hand_computed_residual() {
        // F F^T X = [[1],[0]] so the residual is [[0],[1]] and Q = 1.
        let x = arr2(&[[1.0], [1.0]]);
        let f = arr2(&[[1.0], [0.0]]);
        assert!((objective(x.view(), f.view()) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn objective_matches_direct_residual() {
        for seed in 0..5 {
            let x = random_nonneg(12, 7, seed);
            let f = random_factor(12, 3, seed + 100);
            let fast = objective(x.view(), f.view());
            let slow = objective_oracle(&x, &f);
            assert!((fast - slow).abs() <= 1e-9 * (1.0 + slow));
        }
    }

    #[test]
    fn gradient_zero_factor_is_zero() {
        let x = random_nonneg(5, 3, 3);
        let f = Array2::<f64>::zeros((5, 2));
        let g = gradient(x.view(), f.view());
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_vanishes_at_exact_factorization() {
        // F = 0.5 * ones(4x1) reconstructs constant X exactly; the gradient
        // cancels to zero without rounding.
        let x = Array2::<f64>::ones((4, 2));
        let f = Array2::from_elem((4, 1), 0.5);
        let g = gradient(x.view(), f.view());
        let pg = projected_gradient(g.view(), f.view());
        assert!(frob_sq(pg.view()).sqrt() < 1e-10);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let x = random_nonneg(5, 3, 4);
        let f = random_factor(5, 2, 5);
        let g = gradient(x.view(), f.view());
        let h = 1e-5;
        for i in 0..5 {
            for j in 0..2 {
                let mut fp = f.clone();
                let mut fm = f.clone();
                fp[[i, j]] += h;
                fm[[i, j]] -= h;
                let fd = (objective_oracle(&x, &fp) - objective_oracle(&x, &fm)) / (2.0 * h);
                let denom = fd.abs().max(1.0);
                assert!(
                    (g[[i, j]] - fd).abs() / denom < 1e-4,
                    "grad[{i},{j}] = {} vs fd {}",
                    g[[i, j]],
                    fd
                );
            }
        }
    }

    #[test]
    fn multiplicative_fixed_point_unchanged() {
        // At F = 0.5 * ones, 2B = D + G element-wise, so the multiplicative
        // factor is exactly one.
        let x = Array2::<f64>::ones((4, 2));
        let f0 = Array2::from_elem((4, 1), 0.5);
        let result = multiplicative_from(x.view(), f0.clone(), 1, 0.0).unwrap();
        assert_eq!(result.factor, f0);
    }

    #[test]
    fn multiplicative_recovers_rank_one_average() {
        let x = Array2::<f64>::ones((4, 2));
        let result = multiplicative(x.view(), 1, 500, 1e-12, 42).unwrap();
        assert!(
            result.final_objective < 1e-6 * frob_sq(x.view()),
            "Q = {} should be tiny",
            result.final_objective
        );
        // The optimum reconstructs X through the rank-1 averaging operator.
        let gram = result.factor.dot(&result.factor.t());
        for v in gram.iter() {
            assert!((v - 0.25).abs() < 1e-3);
        }
    }

    #[test]
    fn multiplicative_never_increases_objective_from_start() {
        for seed in 0..10 {
            let x = random_nonneg(30, 6, seed);
            let f0 = random_factor(30, 3, seed + 50);
            let q0 = objective(x.view(), f0.view());
            let result = multiplicative_from(x.view(), f0, 200, 1e-9).unwrap();
            assert!(
                result.final_objective <= q0 * (1.0 + 1e-12),
                "seed {seed}: {} > {}",
                result.final_objective,
                q0
            );
        }
    }

    #[test]
    fn multiplicative_iterations_mostly_decrease() {
        let mut decreases = 0usize;
        let mut total = 0usize;
        for seed in 0..6 {
            let x = random_nonneg(25, 5, 30 + seed);
            let result = multiplicative(x.view(), 3, 80, 0.0, seed).unwrap();
            for w in result.records.windows(2) {
                total += 1;
                if w[1].objective <= w[0].objective * (1.0 + 1e-12) {
                    decreases += 1;
                }
            }
        }
        assert!(
            decreases as f64 >= 0.95 * total as f64,
            "only {decreases}/{total} iterations decreased"
        );
    }

    #[test]
    fn multiplicative_keeps_factor_nonnegative() {
        let x = random_nonneg(20, 4, 7);
        let result = multiplicative(x.view(), 3, 60, 0.0, 8).unwrap();
        assert!(result.factor.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn multiplicative_rejects_negative_input() {
        let x = arr2(&[[1.0, -0.5], [0.0, 2.0]]);
        assert!(multiplicative(x.view(), 1, 10, 1e-6, 0).is_err());
    }

    #[test]
    fn apgd_returns_stationary_start_unchanged() {
        let x = Array2::<f64>::ones((4, 2));
        let f0 = Array2::from_elem((4, 1), 0.5);
        let result = apgd_from(x.view(), f0.clone(), &ApgdParams::default()).unwrap();
        assert_eq!(result.factor, f0);
        assert_eq!(result.stop, StopReason::Stationary);
        assert_eq!(result.records.len(), 1);
    }

    #[test]
    fn apgd_momentum_follows_recurrence() {
        let x = random_nonneg(20, 5, 9);
        let params = ApgdParams {
            max_iter: 6,
            epsilon: 0.0,
            tol: 0.0,
            ..ApgdParams::default()
        };
        let result = apgd(x.view(), 2, &params, 3).unwrap();
        assert!((result.gammas[0] - 1.0).abs() < 1e-15);
        assert!((result.gammas[1] - (1.0 + 5.0f64.sqrt()) / 2.0).abs() < 1e-12);
        // Oracle: iterate the closed-form recurrence.
        let mut expected = 1.0f64;
        for (t, &got) in result.gammas.iter().enumerate() {
            assert!(
                (got - expected).abs() < 1e-12,
                "gamma[{t}] = {got}, expected {expected}"
            );
            expected = 0.5 * (1.0 + (1.0 + 4.0 * expected * expected).sqrt());
        }
        // Frozen first values of the sequence.
        assert!((result.gammas[1] - 1.618033988749895).abs() < 1e-12);
        assert!((result.gammas[2] - 2.1935270853310538).abs() < 1e-12);
    }

    #[test]
    fn apgd_objective_nonincreasing_without_exhaustion() {
        let x = random_nonneg(30, 6, 11);
        let params = ApgdParams {
            max_iter: 40,
            epsilon: 0.0,
            tol: 0.0,
            ..ApgdParams::default()
        };
        let result = apgd(x.view(), 3, &params, 4).unwrap();
        if result.line_search_exhaustions == 0 {
            for w in result.records.windows(2) {
                assert!(
                    w[1].objective <= w[0].objective * (1.0 + 1e-12),
                    "accepted steps must satisfy sufficient decrease"
                );
            }
        }
        assert!(result.factor.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn apgd_improves_over_start() {
        for seed in 0..5 {
            let x = random_nonneg(25, 5, 60 + seed);
            let f0 = random_factor(25, 3, seed);
            let q0 = objective(x.view(), f0.view());
            let result = apgd_from(x.view(), f0, &ApgdParams::default()).unwrap();
            assert!(result.final_objective < q0);
        }
    }

    #[test]
    fn convergence_csv_roundtrip_shape() {
        let records = vec![
            IterationRecord {
                iteration: 0,
                objective: 2.0,
                grad_norm: 1.0,
                step: 0.0,
            },
            IterationRecord {
                iteration: 1,
                objective: 1.0,
                grad_norm: 0.5,
                step: 1.0,
            },
        ];
        let mut buf = Vec::new();
        write_convergence_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "iteration,objective,grad_norm,step");
        assert!(lines[1].starts_with("0,"));
    }
}
