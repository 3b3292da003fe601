use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: DenseMatrix,
    /// Lloyd iterations performed.
    pub iterations: usize,
    /// Within-cluster sum of squares after each iteration (post centroid update).
    pub objective_trace: Vec<f64>,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Hard clustering into `k` groups; returns the assignment of each row.
pub fn kmeans(emb: &DenseMatrix, k: usize, seed: u64, max_iters: usize) -> Result<Vec<usize>> {
    Ok(kmeans_traced(emb, k, seed, max_iters)?.assignments)
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iters` is reached. A cluster that goes empty takes over
/// the point farthest from its current centroid.
pub fn kmeans_traced(emb: &DenseMatrix, k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    let n = emb.rows();
    if k == 0 {
        return Err(Error::InvalidArgument("kmeans needs k >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("kmeans with k = {k} > {n} points")));
    }
    let d = emb.cols();
    let mut rng = seed::rng(seed, "kmeans++", 0);

    // k-means++ seeding.
    let mut centers: Vec<usize> = vec![rng.gen_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(emb.row(i), emb.row(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = None;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 {
                    chosen = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            chosen.expect("positive total weight")
        } else {
            // All remaining points coincide with a center: take the lowest unused index.
            (0..n).find(|i| !centers.contains(i)).expect("k <= n")
        };
        centers.push(pick);
        for (i, w) in nearest.iter_mut().enumerate() {
            *w = w.min(sq_dist(emb.row(i), emb.row(pick)));
        }
    }
    let mut centroids = emb.select_rows(&centers);

    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut dist = vec![0.0; n];
    while iterations < max_iters {
        iterations += 1;
        let mut changed = false;
        for i in 0..n {
            let row = emb.row(i);
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for c in 0..k {
                let dc = sq_dist(row, centroids.row(c));
                if dc < best_d {
                    best = c;
                    best_d = dc;
                }
            }
            dist[i] = best_d;
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }

        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[assignments[i]] > 1)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
            if let Some(i) = far.filter(|&i| dist[i] > 0.0) {
                counts[assignments[i]] -= 1;
                counts[c] = 1;
                assignments[i] = c;
                dist[i] = 0.0;
                changed = true;
            }
        }

        // Means are accumulated relative to one member of each cluster so that
        // a cluster of coincident points gets that point back exactly.
        let mut anchor = vec![usize::MAX; k];
        let mut sums = DenseMatrix::zeros(k, d);
        for (i, &a) in assignments.iter().enumerate() {
            if anchor[a] == usize::MAX {
                anchor[a] = i;
            }
            let base = emb.row(anchor[a]);
            for ((s, x), b) in sums.row_mut(a).iter_mut().zip(emb.row(i)).zip(base) {
                *s += x - b;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                let base = emb.row(anchor[c]);
                for ((dst, s), b) in centroids.row_mut(c).iter_mut().zip(sums.row(c)).zip(base) {
                    *dst = b + s * inv;
                }
            }
        }
        trace.push((0..n).map(|i| sq_dist(emb.row(i), centroids.row(assignments[i]))).sum());
        if !changed {
            break;
        }
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        iterations,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn k_equals_n_saturates() {
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0], vec![7.0]]);
        let r = kmeans_traced(&x, 4, 3, 300).unwrap();
        let mut a = r.assignments.clone();
        a.sort();
        assert_eq!(a, vec![0, 1, 2, 3]);
        assert_eq!(r.objective(), 0.0);
    }

    #[test]
    fn k_one_is_single_cluster() {
        let x = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![4.0, 2.0], vec![3.0, 3.0]]);
        assert_eq!(kmeans(&x, 1, 0, 300).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn separable_blobs() {
        let mut rng = seed::rng(9, "test", 0);
        let mut rows = Vec::new();
        for blob in 0..2 {
            for _ in 0..20 {
                let (r, t): (f64, f64) = (rng.gen(), rng.gen::<f64>() * std::f64::consts::TAU);
                rows.push(vec![100.0 * blob as f64 + r * t.cos(), r * t.sin()]);
            }
        }
        let x = DenseMatrix::from_rows(&rows);
        for s in 0..10 {
            let a = kmeans(&x, 2, s, 300).unwrap();
            assert!(a[..20].iter().all(|&c| c == a[0]));
            assert!(a[20..].iter().all(|&c| c == a[20]));
            assert_ne!(a[0], a[20]);
        }
    }

    #[test]
    fn identical_points_and_errors() {
        let x = DenseMatrix::filled(5, 2, 1.5);
        let a = kmeans(&x, 3, 1, 300).unwrap();
        assert!(a.iter().all(|&c| c == a[0]));
        assert!(kmeans(&x, 6, 1, 300).is_err());
    }
}
