//! Seeded k-means and the clustering recall metric: the percentage of known
//! similar-question pairs whose two members land in the same cluster.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::component_rng;

#[derive(Debug, Clone)]
pub struct KmeansOutcome {
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    /// `100 * co-clustered pairs / total pairs`.
    pub recall: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ initialization followed by Lloyd iterations until the maximum
/// centroid shift drops below 1e-9 or 100 iterations pass. `pairs` index
/// into `points`; recall counts the pairs whose members share a cluster.
pub fn kmeans_cluster_recall(
    points: &[Vec<f64>],
    pairs: &[(usize, usize)],
    k: usize,
    seed: u64,
) -> Result<KmeansOutcome> {
    if k == 0 {
        return Err(Error::Argument("k must be >= 1".into()));
    }
    if k > points.len() {
        return Err(Error::Argument(format!(
            "k = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    for &(a, b) in pairs {
        if a >= points.len() || b >= points.len() {
            return Err(Error::Argument(format!("pair ({a}, {b}) out of range")));
        }
    }
    let dim = points[0].len();
    let mut rng = component_rng(seed, "kmeans");

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    while centroids.len() < k {
        let dists: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| sq_dist(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = dists.iter().sum();
        let next = if total == 0.0 {
            rng.gen_range(0..points.len())
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in dists.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(points[next].clone());
    }

    let mut assignments = vec![0usize; points.len()];
    let mut objective_trace = Vec::new();
    let mut iterations = 0usize;
    for _ in 0..100 {
        iterations += 1;
        // Assign.
        let mut objective = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(c, cent)| (c, sq_dist(p, cent)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            assignments[i] = best;
            objective += d;
        }
        objective_trace.push(objective);
        // Update.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignments[i]] += 1;
            for (s, v) in sums[assignments[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut max_shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue; // empty cluster keeps its centroid
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            max_shift = max_shift.max(sq_dist(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        if max_shift < 1e-9 {
            break;
        }
    }

    let co_clustered = pairs
        .iter()
        .filter(|(a, b)| assignments[*a] == assignments[*b])
        .count();
    let recall = if pairs.is_empty() {
        0.0
    } else {
        100.0 * co_clustered as f64 / pairs.len() as f64
    };
    Ok(KmeansOutcome {
        assignments,
        objective_trace,
        iterations,
        recall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(center: &[f64], n: usize, spread: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = component_rng(seed, "blob");
        (0..n)
            .map(|_| {
                center
                    .iter()
                    .map(|c| c + spread * (rng.gen::<f64>() - 0.5))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn k_one_gives_full_recall() {
        let points = blob(&[0.0, 0.0], 6, 1.0, 1);
        let pairs = vec![(0, 1), (2, 3), (4, 5)];
        let out = kmeans_cluster_recall(&points, &pairs, 1, 0).unwrap();
        assert_eq!(out.recall, 100.0);
    }

    #[test]
    fn k_equals_points_gives_zero_recall() {
        // All points distinct: singleton clusters separate every pair.
        let points: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 0.0]).collect();
        let pairs = vec![(0, 1), (2, 3)];
        let out = kmeans_cluster_recall(&points, &pairs, 6, 0).unwrap();
        assert_eq!(out.recall, 0.0);
    }

    #[test]
    fn two_separated_blobs_recover() {
        let mut points = blob(&[0.0, 0.0], 10, 0.5, 2);
        points.extend(blob(&[50.0, 50.0], 10, 0.5, 3));
        let pairs: Vec<(usize, usize)> = (0..5)
            .map(|i| (2 * i, 2 * i + 1))
            .chain((0..5).map(|i| (10 + 2 * i, 10 + 2 * i + 1)))
            .collect();
        let out = kmeans_cluster_recall(&points, &pairs, 2, 7).unwrap();
        assert_eq!(out.recall, 100.0);
    }

    #[test]
    fn objective_is_non_increasing() {
        let mut points = blob(&[0.0, 0.0], 20, 4.0, 4);
        points.extend(blob(&[3.0, 1.0], 20, 4.0, 5));
        let out = kmeans_cluster_recall(&points, &[], 4, 9).unwrap();
        for w in out.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "objective rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn k_out_of_range() {
        let points = vec![vec![0.0], vec![1.0]];
        assert!(kmeans_cluster_recall(&points, &[], 3, 0).is_err());
        assert!(kmeans_cluster_recall(&points, &[], 0, 0).is_err());
    }

    #[test]
    fn seeded_determinism() {
        let points = blob(&[0.0, 0.0], 30, 10.0, 6);
        let a = kmeans_cluster_recall(&points, &[(0, 1)], 3, 42).unwrap();
        let b = kmeans_cluster_recall(&points, &[(0, 1)], 3, 42).unwrap();
        assert_eq!(a.assignments, b.assignments);
    }
}
