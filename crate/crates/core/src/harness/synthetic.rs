//! Seeded synthetic datasets for tests and benchmarks.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::Dataset;

/// Two Gaussian blobs with centers `separation` apart (in Euclidean
/// distance) and per-coordinate standard deviation `noise`. Classes
/// alternate row by row so any contiguous slice stays balanced.
///
/// For `d >= 2` the class centers occupy disjoint coordinate halves, so
/// the clusters differ in direction rather than only in scale; a purely
/// radial layout would be invisible to nonnegative reconstruction graphs.
pub fn gaussian_blobs(n: usize, d: usize, separation: f64, noise: f64, seed: u64) -> Dataset {
    assert!(n >= 2 && d >= 1, "need at least two rows and one feature");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = d / 2;
    let amplitude = separation / (d as f64).sqrt();
    let mut x = Array2::<f64>::zeros((n, d));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label: i8 = if i % 2 == 0 { 1 } else { -1 };
        y.push(label);
        for j in 0..d {
            let center = if d == 1 {
                f64::from(label) * separation / 2.0
            } else if (label == 1) == (j < half) {
                amplitude
            } else {
                0.0
            };
            x[[i, j]] = center + noise * standard_normal(&mut rng);
        }
    }
    Dataset::new(format!("blobs-{n}x{d}-s{seed}"), x, y).expect("blobs are valid")
}

/// Box-Muller standard normal draw.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_seeded_and_balanced() {
        let a = gaussian_blobs(40, 5, 4.0, 1.0, 3);
        let b = gaussian_blobs(40, 5, 4.0, 1.0, 3);
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(a.y.iter().filter(|&&v| v == 1).count(), 20);
    }

    #[test]
    fn blob_centers_are_separated() {
        let ds = gaussian_blobs(2000, 8, 10.0, 1.0, 1);
        let mut mean_pos = vec![0.0; 8];
        let mut mean_neg = vec![0.0; 8];
        for i in 0..2000 {
            for j in 0..8 {
                if ds.y[i] == 1 {
                    mean_pos[j] += ds.x[[i, j]] / 1000.0;
                } else {
                    mean_neg[j] += ds.x[[i, j]] / 1000.0;
                }
            }
        }
        let dist: f64 = mean_pos
            .iter()
            .zip(&mean_neg)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!((dist - 10.0).abs() < 0.5, "centers {dist} apart");
    }
}
