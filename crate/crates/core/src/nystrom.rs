//! Rank-k kernel approximation from landmark points.
//!
//! Landmarks come either from seeded sampling without replacement or from
//! a few rounds of distributed Lloyd iterations; the factor is built from
//! the eigendecomposition of the landmark kernel block `G` so that
//! `F F^T = C G^+ C^T`, with a relative pseudo-inverse cutoff on the
//! spectrum.

use std::ops::Range;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::runtime::{RowPartitionedMatrix, WorkerGroup};

/// RBF kernel width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    sigma: f64,
}

impl KernelParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kernel width must be positive and finite, got {sigma}"
            )));
        }
        Ok(KernelParams { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// The k landmark points anchoring the approximation, with their global
/// source rows when they were sampled (k-means centroids have none).
#[derive(Debug, Clone)]
pub struct LandmarkSet {
    pub points: Array2<f64>,
    pub source_indices: Option<Vec<usize>>,
}

impl LandmarkSet {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }
}

/// Gaussian similarity `exp(-||a - b||^2 / (2 sigma^2))`, in (0, 1].
pub fn rbf(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, params: &KernelParams) -> f64 {
    debug_assert_eq!(a.len(), b.len(), "rbf operands must have equal length");
    let mut sq = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        sq += d * d;
    }
    (-sq / (2.0 * params.sigma * params.sigma)).exp()
}

/// Median pairwise Euclidean distance over a seeded subsample of at most
/// `max_rows` rows; the standard width heuristic when sigma is not given.
/// Falls back to the smallest positive distance (or 1.0) if the median
/// degenerates to zero.
pub fn median_heuristic_sigma(x: ArrayView2<'_, f64>, max_rows: usize, seed: u64) -> f64 {
    let n = x.nrows();
    let take = n.min(max_rows.max(2));
    let order = shuffled_indices(n, seed);
    let sample: Vec<usize> = order.into_iter().take(take).collect();
    let mut dists = Vec::with_capacity(sample.len() * (sample.len().saturating_sub(1)) / 2);
    for (a, &i) in sample.iter().enumerate() {
        for &j in sample.iter().skip(a + 1) {
            let mut sq = 0.0;
            for c in 0..x.ncols() {
                let d = x[[i, c]] - x[[j, c]];
                sq += d * d;
            }
            dists.push(sq.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    if median > 0.0 {
        median
    } else {
        dists.iter().copied().find(|&d| d > 0.0).unwrap_or(1.0)
    }
}

/// Seeded Fisher-Yates shuffle of `0..n`.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Samples `k` distinct rows without replacement: rank 0 shuffles the
/// global index range and broadcasts the chosen indices, then each owning
/// rank broadcasts its rows so the landmark set is replicated everywhere,
/// ordered by the shuffled index list.
pub fn sample_random(
    group: &WorkerGroup,
    x: &RowPartitionedMatrix,
    k: usize,
    seed: u64,
) -> Result<LandmarkSet> {
    x.check_group(group)?;
    let n = x.rows();
    if k == 0 || k > n {
        return Err(Error::SampleTooLarge {
            requested: k,
            available: n,
        });
    }
    let d = x.cols();
    let results = group.run(|worker| -> Result<(Array2<f64>, Vec<usize>)> {
        let indices_buf = if worker.is_root() {
            shuffled_indices(n, seed)
                .into_iter()
                .take(k)
                .map(|i| i as f64)
                .collect()
        } else {
            vec![0.0; k]
        };
        let indices_buf = worker.broadcast(0, &indices_buf)?;
        let indices: Vec<usize> = indices_buf.iter().map(|&v| v as usize).collect();

        let range = x.range(worker.rank());
        let chunk = x.chunk(worker.rank());
        let mut points = Array2::<f64>::zeros((k, d));
        for (slot, &idx) in indices.iter().enumerate() {
            let owner = owner_of(x.ranges(), idx);
            let row_buf = if owner == worker.rank() {
                chunk.row(idx - range.start).to_vec()
            } else {
                vec![0.0; d]
            };
            let row = worker.broadcast(owner, &row_buf)?;
            for (c, v) in row.into_iter().enumerate() {
                points[[slot, c]] = v;
            }
        }
        Ok((points, indices))
    });
    let mut out = None;
    for r in results {
        let (points, indices) = r?;
        out = Some(LandmarkSet {
            points,
            source_indices: Some(indices),
        });
    }
    Ok(out.expect("at least one worker"))
}

/// Landmarks from `max_iter` rounds of distributed Lloyd iterations,
/// initialized with [`sample_random`]. Assignments break distance ties
/// toward the lower centroid index; a centroid that ends a round with no
/// assigned points keeps its previous position.
pub fn sample_kmeans(
    group: &WorkerGroup,
    x: &RowPartitionedMatrix,
    k: usize,
    max_iter: usize,
    seed: u64,
) -> Result<LandmarkSet> {
    if max_iter == 0 {
        return Err(Error::InvalidParameter("k-means needs max_iter >= 1".into()));
    }
    let init = sample_random(group, x, k, seed)?;
    let d = x.cols();
    let results = group.run(|worker| -> Result<Array2<f64>> {
        let chunk = x.chunk(worker.rank());
        let mut centroids = init.points.clone();
        for _ in 0..max_iter {
            let mut counts = vec![0.0; k];
            let mut sums = vec![0.0; k * d];
            for i in 0..chunk.nrows() {
                let row = chunk.row(i);
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for c in 0..k {
                    let mut sq = 0.0;
                    for f in 0..d {
                        let diff = row[f] - centroids[[c, f]];
                        sq += diff * diff;
                    }
                    if sq < best_d {
                        best_d = sq;
                        best = c;
                    }
                }
                counts[best] += 1.0;
                for f in 0..d {
                    sums[best * d + f] += row[f];
                }
            }
            let counts = worker.allreduce_sum(&counts)?;
            let sums = worker.allreduce_sum(&sums)?;
            for c in 0..k {
                if counts[c] > 0.0 {
                    for f in 0..d {
                        centroids[[c, f]] = sums[c * d + f] / counts[c];
                    }
                }
            }
        }
        Ok(centroids)
    });
    let mut out = None;
    for r in results {
        out = Some(r?);
    }
    Ok(LandmarkSet {
        points: out.expect("at least one worker"),
        source_indices: None,
    })
}

/// Builds the n-by-k' factor `F = C V diag(1/sqrt(lambda))` from the
/// landmark kernel block, keeping eigenvalues above `pinv_tol * lambda_max`
/// (negative eigenvalues are clamped to zero first). `F F^T` equals
/// `C G^+ C^T` restricted to the kept spectrum; k' can be smaller than k
/// when part of the spectrum is cut.
pub fn factor(
    group: &WorkerGroup,
    x: &RowPartitionedMatrix,
    landmarks: &LandmarkSet,
    params: &KernelParams,
    pinv_tol: f64,
) -> Result<RowPartitionedMatrix> {
    x.check_group(group)?;
    if landmarks.is_empty() {
        return Err(Error::InvalidParameter("landmark set is empty".into()));
    }
    if !(pinv_tol > 0.0 && pinv_tol < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "pseudo-inverse cutoff must lie in (0, 1), got {pinv_tol}"
        )));
    }
    let k = landmarks.len();
    let points = &landmarks.points;
    let shares = share_ranges(k, group.workers());

    let results = group.run(|worker| -> Result<Array2<f64>> {
        let rank = worker.rank();
        let chunk = x.chunk(rank);

        // Landmark kernel block, rows computed by their owning rank and
        // assembled everywhere by a sum reduction.
        let mut g_local = vec![0.0; k * k];
        for i in shares[rank].clone() {
            for j in 0..k {
                g_local[i * k + j] = rbf(points.row(i), points.row(j), params);
            }
        }
        let g_flat = worker.allreduce_sum(&g_local)?;

        // Eigendecomposition on rank 0 only; eigenpairs are broadcast.
        let (vals_buf, vecs_buf) = if worker.is_root() {
            let g = Array2::from_shape_vec((k, k), g_flat).expect("square buffer");
            let (mut vals, vecs) = linalg::sym_eig(g.view());
            vals.mapv_inplace(|v| v.max(0.0));
            (vals.to_vec(), vecs.into_raw_vec_and_offset().0)
        } else {
            (vec![0.0; k], vec![0.0; k * k])
        };
        let vals = worker.broadcast(0, &vals_buf)?;
        let vecs_flat = worker.broadcast(0, &vecs_buf)?;

        // Every rank applies the same cut to the broadcast spectrum, so a
        // rank-deficient kernel fails on all ranks together.
        let kept = spectrum_cut(&vals, pinv_tol)?;
        let vecs = Array2::from_shape_vec((k, k), vecs_flat).expect("square buffer");

        // C chunk: kernel between local rows and all landmarks.
        let mut c = Array2::<f64>::zeros((chunk.nrows(), k));
        for i in 0..chunk.nrows() {
            for j in 0..k {
                c[[i, j]] = rbf(chunk.row(i), points.row(j), params);
            }
        }

        let mut basis = Array2::<f64>::zeros((k, kept.len()));
        for (col, &src) in kept.iter().enumerate() {
            let scale = 1.0 / vals[src].sqrt();
            for row in 0..k {
                basis[[row, col]] = vecs[[row, src]] * scale;
            }
        }
        Ok(linalg::par_matmul(c.view(), basis.view()))
    });

    let mut chunks = Vec::with_capacity(results.len());
    for r in results {
        chunks.push(r?);
    }
    Ok(RowPartitionedMatrix::from_chunks(x.ranges().to_vec(), chunks))
}

/// Indices of the eigenvalues kept by the relative pseudo-inverse cutoff;
/// fails when the whole (already clamped) spectrum falls below it.
fn spectrum_cut(vals: &[f64], pinv_tol: f64) -> Result<Vec<usize>> {
    let lambda_max = vals.iter().copied().fold(0.0f64, f64::max);
    let kept: Vec<usize> = (0..vals.len())
        .filter(|&i| vals[i] > pinv_tol * lambda_max && vals[i] > 0.0)
        .collect();
    if kept.is_empty() {
        return Err(Error::RankDeficientKernel);
    }
    Ok(kept)
}

fn owner_of(ranges: &[Range<usize>], index: usize) -> usize {
    ranges
        .iter()
        .position(|r| r.contains(&index))
        .expect("index inside global range")
}

/// Balanced contiguous shares of `0..total` over `parts`, allowing empty
/// shares when there are more ranks than items.
fn share_ranges(total: usize, parts: usize) -> Vec<Range<usize>> {
    let base = total / parts;
    let extra = total % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for r in 0..parts {
        let size = base + usize::from(r < extra);
        out.push(start..start + size);
        start += size;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array1, Array2};

    fn partitioned(p: usize, m: &Array2<f64>) -> (WorkerGroup, RowPartitionedMatrix) {
        let group = WorkerGroup::new(p).unwrap();
        let part = RowPartitionedMatrix::partition(&group, m.view()).unwrap();
        (group, part)
    }

    fn blobs(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |(i, _)| {
            let center = if i % 2 == 0 { 0.0 } else { 6.0 };
            center + rng.random_range(-0.5..0.5)
        })
    }

    #[test]
    fn rbf_zero_distance_is_one() {
        let p = KernelParams::new(2.0).unwrap();
        let a = arr1(&[1.0, -2.0, 0.5]);
        assert_eq!(rbf(a.view(), a.view(), &p), 1.0);
    }

    #[test]
    fn rbf_half_at_analytic_distance() {
        let sigma = 1.3;
        let p = KernelParams::new(sigma).unwrap();
        let a = arr1(&[0.0]);
        let b = arr1(&[sigma * (2.0 * 2.0f64.ln()).sqrt()]);
        assert!((rbf(a.view(), b.view(), &p) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rbf_hand_computed_value() {
        // ||a - b||^2 = 9 + 16 = 25, sigma = 5: exp(-25/50) = exp(-0.5).
        let p = KernelParams::new(5.0).unwrap();
        let a = arr1(&[0.0, 0.0]);
        let b = arr1(&[3.0, 4.0]);
        let got = rbf(a.view(), b.view(), &p);
        assert!((got - 0.6065306597126334).abs() < 1e-15);
    }

    #[test]
    fn kernel_params_reject_nonpositive_sigma() {
        assert!(KernelParams::new(0.0).is_err());
        assert!(KernelParams::new(-1.0).is_err());
        assert!(KernelParams::new(f64::NAN).is_err());
    }

    #[test]
    fn sample_all_rows_is_a_permutation() {
        let m = blobs(9, 3, 1);
        let (group, part) = partitioned(3, &m);
        let set = sample_random(&group, &part, 9, 42).unwrap();
        let mut idx = set.source_indices.clone().unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..9).collect::<Vec<_>>());
        // Points carry the rows named by the (unsorted) indices.
        for (slot, &i) in set.source_indices.as_ref().unwrap().iter().enumerate() {
            for c in 0..3 {
                assert_eq!(set.points[[slot, c]], m[[i, c]]);
            }
        }
    }

    #[test]
    fn single_sample_consistent_across_worker_counts() {
        let m = blobs(12, 2, 2);
        let mut picks = Vec::new();
        for p in [1usize, 2, 4] {
            let (group, part) = partitioned(p, &m);
            let set = sample_random(&group, &part, 1, 7).unwrap();
            picks.push((set.source_indices.unwrap()[0], set.points.clone()));
        }
        for w in picks.windows(2) {
            assert_eq!(w[0].0, w[1].0);
            assert_eq!(w[0].1, w[1].1);
        }
    }

    #[test]
    fn sampled_indices_match_serial_reference_shuffle() {
        let m = blobs(8, 2, 3);
        let (group, part) = partitioned(2, &m);
        let set = sample_random(&group, &part, 3, 42).unwrap();

        // Serial reference: Fisher-Yates over [0..8) with the same seeded
        // generator, taking the first three entries.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut reference: Vec<usize> = (0..8).collect();
        for i in (1..8).rev() {
            let j = rng.random_range(0..=i);
            reference.swap(i, j);
        }
        reference.truncate(3);
        assert_eq!(set.source_indices.unwrap(), reference);
    }

    #[test]
    fn sample_rejects_oversized_k() {
        let m = blobs(4, 2, 4);
        let (group, part) = partitioned(2, &m);
        assert!(sample_random(&group, &part, 5, 0).is_err());
        assert!(sample_kmeans(&group, &part, 5, 3, 0).is_err());
    }

    #[test]
    fn kmeans_with_k_equal_n_is_a_fixed_point() {
        let m = blobs(6, 2, 5);
        let (group, part) = partitioned(2, &m);
        let set = sample_kmeans(&group, &part, 6, 1, 11).unwrap();
        // Every point is its own nearest centroid, so one round keeps the
        // initial sampled rows (as singleton-cluster means) exactly.
        let init = sample_random(&group, &part, 6, 11).unwrap();
        assert_eq!(set.points, init.points);
        assert!(set.source_indices.is_none());
    }

    #[test]
    fn kmeans_finds_separated_blob_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 40;
        let m = Array2::from_shape_fn((n, 2), |(i, _)| {
            let center = if i < n / 2 { 0.0 } else { 10.0 };
            center + rng.random_range(-0.3..0.3)
        });
        let (group, part) = partitioned(4, &m);
        let set = sample_kmeans(&group, &part, 2, 5, 23).unwrap();

        // Serial Lloyd oracle with the same init and tie rules.
        let init = sample_random(&group, &part, 2, 23).unwrap();
        let mut centroids = init.points.clone();
        for _ in 0..5 {
            let mut counts = [0.0f64; 2];
            let mut sums = [[0.0f64; 2]; 2];
            for i in 0..n {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for c in 0..2 {
                    let dx = m[[i, 0]] - centroids[[c, 0]];
                    let dy = m[[i, 1]] - centroids[[c, 1]];
                    let sq = dx * dx + dy * dy;
                    if sq < best_d {
                        best_d = sq;
                        best = c;
                    }
                }
                counts[best] += 1.0;
                sums[best][0] += m[[i, 0]];
                sums[best][1] += m[[i, 1]];
            }
            for c in 0..2 {
                if counts[c] > 0.0 {
                    centroids[[c, 0]] = sums[c][0] / counts[c];
                    centroids[[c, 1]] = sums[c][1] / counts[c];
                }
            }
        }
        for c in 0..2 {
            for f in 0..2 {
                assert!((set.points[[c, f]] - centroids[[c, f]]).abs() < 1e-9);
            }
        }
        // And the centroids sit on the blob means.
        let mut got: Vec<f64> = (0..2).map(|c| set.points[[c, 0]]).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((got[0] - 0.0).abs() < 0.2);
        assert!((got[1] - 10.0).abs() < 0.2);
    }

    #[test]
    fn kmeans_empty_cluster_keeps_previous_centroid() {
        // Duplicate landmarks: every point ties to the lower-index
        // centroid, so the second cluster empties and must stay put.
        let m = arr2(&[[5.0], [5.0], [9.0]]);
        let seed = (0..200u64)
            .find(|&s| {
                let mut idx: Vec<usize> = shuffled_indices(3, s).into_iter().take(2).collect();
                idx.sort_unstable();
                idx == vec![0, 1]
            })
            .expect("some seed samples the duplicate rows");
        let (group, part) = partitioned(1, &m);
        let set = sample_kmeans(&group, &part, 2, 1, seed).unwrap();
        let mut vals: Vec<f64> = (0..2).map(|c| set.points[[c, 0]]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(vals[0], 5.0, "empty cluster must keep its centroid");
        assert!((vals[1] - 19.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_on_identical_points_returns_that_point() {
        let m = Array2::from_elem((7, 3), 2.5);
        let (group, part) = partitioned(1, &m);
        let set = sample_kmeans(&group, &part, 1, 4, 3).unwrap();
        for f in 0..3 {
            assert_eq!(set.points[[0, f]], 2.5);
        }
    }

    #[test]
    fn factor_with_all_rows_as_landmarks_reproduces_kernel() {
        let m = blobs(10, 3, 6);
        let params = KernelParams::new(2.0).unwrap();
        let (group, part) = partitioned(2, &m);
        let landmarks = sample_random(&group, &part, 10, 5).unwrap();
        let f = factor(&group, &part, &landmarks, &params, 1e-12)
            .unwrap()
            .to_dense();
        let gram = f.dot(&f.t());
        for i in 0..10 {
            for j in 0..10 {
                let w = rbf(m.row(i), m.row(j), &params);
                assert!(
                    (gram[[i, j]] - w).abs() < 1e-8,
                    "exact-rank factor must reproduce the kernel"
                );
            }
        }
    }

    #[test]
    fn factor_exact_when_data_has_k_distinct_rows() {
        // 12 rows but only 3 distinct values; landmarks cover the distinct rows.
        let distinct = arr2(&[[0.0, 1.0], [4.0, -1.0], [-2.0, 3.0]]);
        let m = Array2::from_shape_fn((12, 2), |(i, j)| distinct[[i % 3, j]]);
        let params = KernelParams::new(1.5).unwrap();
        let (group, part) = partitioned(3, &m);
        let landmarks = LandmarkSet {
            points: distinct.clone(),
            source_indices: Some(vec![0, 1, 2]),
        };
        let f = factor(&group, &part, &landmarks, &params, 1e-12)
            .unwrap()
            .to_dense();
        let gram = f.dot(&f.t());
        for i in 0..12 {
            for j in 0..12 {
                let w = rbf(m.row(i), m.row(j), &params);
                assert!((gram[[i, j]] - w).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn factor_single_point_is_unit() {
        let m = arr2(&[[3.0, -1.0]]);
        let params = KernelParams::new(1.0).unwrap();
        let (group, part) = partitioned(1, &m);
        let landmarks = sample_random(&group, &part, 1, 0).unwrap();
        let f = factor(&group, &part, &landmarks, &params, 1e-12)
            .unwrap()
            .to_dense();
        assert_eq!(f.shape(), &[1, 1]);
        assert!((f[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn factor_gram_is_symmetric_psd() {
        let m = blobs(30, 4, 8);
        let params = KernelParams::new(3.0).unwrap();
        let (group, part) = partitioned(3, &m);
        let landmarks = sample_random(&group, &part, 6, 9).unwrap();
        let f = factor(&group, &part, &landmarks, &params, 1e-12)
            .unwrap()
            .to_dense();
        let gram = f.dot(&f.t());
        for i in 0..30 {
            for j in 0..30 {
                assert!((gram[[i, j]] - gram[[j, i]]).abs() < 1e-10);
            }
        }
        // PSD by construction: v^T (F F^T) v = ||F^T v||^2 >= 0 for any v;
        // spot-check with a few random vectors.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..5 {
            let v = Array1::from_shape_fn(30, |_| rng.random_range(-1.0..1.0));
            let q = v.dot(&gram.dot(&v));
            assert!(q >= -1e-10);
        }
    }

    #[test]
    fn factor_landmark_block_reproduces_g() {
        let m = blobs(20, 3, 10);
        let params = KernelParams::new(2.5).unwrap();
        let (group, part) = partitioned(2, &m);
        let landmarks = sample_random(&group, &part, 5, 13).unwrap();
        let f = factor(&group, &part, &landmarks, &params, 1e-12)
            .unwrap()
            .to_dense();
        let gram = f.dot(&f.t());
        let idx = landmarks.source_indices.as_ref().unwrap();
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                let g = rbf(landmarks.points.row(a), landmarks.points.row(b), &params);
                assert!(
                    (gram[[i, j]] - g).abs() < 1e-8,
                    "landmark block must match G when no eigenvalue is cut"
                );
            }
        }
    }

    #[test]
    fn spectrum_cut_rejects_flat_zero_spectrum() {
        let err = spectrum_cut(&[0.0, 0.0, 0.0], 1e-12).unwrap_err();
        assert!(err.to_string().contains("rank-deficient landmark kernel"));
        assert!(spectrum_cut(&[1.0, 1e-16], 1e-12).unwrap() == vec![0]);
    }

    #[test]
    fn approximation_error_shrinks_with_k_on_average() {
        let params = KernelParams::new(4.0).unwrap();
        let ks = [4usize, 12, 36];
        let mut means = Vec::new();
        for &k in &ks {
            let mut total = 0.0;
            for seed in 0..20u64 {
                let m = blobs(120, 5, 1000 + seed);
                let (group, part) = partitioned(1, &m);
                let landmarks = sample_random(&group, &part, k, seed).unwrap();
                let f = factor(&group, &part, &landmarks, &params, 1e-12)
                    .unwrap()
                    .to_dense();
                let gram = f.dot(&f.t());
                let mut err = 0.0;
                for i in 0..120 {
                    for j in 0..120 {
                        let w = rbf(m.row(i), m.row(j), &params);
                        let d = gram[[i, j]] - w;
                        err += d * d;
                    }
                }
                total += err.sqrt();
            }
            means.push(total / 20.0);
        }
        assert!(
            means[0] >= means[1] && means[1] >= means[2],
            "mean Frobenius error must not increase with k: {means:?}"
        );
    }

    #[test]
    fn median_sigma_is_positive_and_seed_stable() {
        let m = blobs(50, 3, 12);
        let s1 = median_heuristic_sigma(m.view(), 1000, 99);
        let s2 = median_heuristic_sigma(m.view(), 1000, 99);
        assert!(s1 > 0.0);
        assert_eq!(s1, s2);
        // Degenerate data still yields a usable width.
        let flat = Array2::<f64>::zeros((5, 2));
        assert_eq!(median_heuristic_sigma(flat.view(), 1000, 1), 1.0);
    }
}
