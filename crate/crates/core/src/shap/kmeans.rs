use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::rng_from_seed;

const MAX_ITERATIONS: usize = 300;
const TOLERANCE: f64 = 1e-6;

/// Weighted reference points standing in for a larger background sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSet {
    pub points: Matrix,
    pub weights: Vec<f64>,
    pub source_count: usize,
}

impl BackgroundSet {
    /// Every row of `data` with equal weight.
    pub fn uniform(data: &Matrix) -> Result<Self> {
        Self::new(data.clone(), vec![1.0 / data.rows() as f64; data.rows()], data.rows())
    }

    pub fn new(points: Matrix, weights: Vec<f64>, source_count: usize) -> Result<Self> {
        if points.rows() == 0 || points.rows() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "background needs k >= 1 points with one weight each ({} points, {} weights)",
                points.rows(),
                weights.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 || !points.is_finite() {
            return Err(Error::InvalidArgument(
                "background weights must be non-negative and sum to 1, points finite".into(),
            ));
        }
        Ok(Self {
            points,
            weights,
            source_count,
        })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    centroids
        .row_iter()
        .enumerate()
        .map(|(c, centroid)| (c, sq_dist(point, centroid)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// k-means++ seeding.
fn seed_centroids(data: &Matrix, k: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    let n = data.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = data.row_iter().map(|p| sq_dist(p, data.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            // Guard against landing on a zero-weight point through rounding.
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, p) in data.row_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, data.row(next)));
        }
    }
    data.select_rows(&chosen)
}

/// Summarizes `data` by `k` centroids (k-means++ seeding, Lloyd iterations)
/// weighted by cluster population. Clusters that end up empty are dropped.
pub fn kmeans_summarize(data: &Matrix, k: usize, seed: u64) -> Result<BackgroundSet> {
    let n = data.rows();
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!(
            "k-means needs n >= k >= 1 (n = {n}, k = {k})"
        )));
    }
    let d = data.cols();
    let mut centroids = seed_centroids(data, k, seed);
    let mut assignment = vec![0usize; n];

    for _ in 0..MAX_ITERATIONS {
        let mut dist = vec![0.0; n];
        for (i, p) in data.row_iter().enumerate() {
            let (c, d2) = nearest(p, &centroids);
            assignment[i] = c;
            dist[i] = d2;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, p) in data.row_iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, v) in sums.row_mut(assignment[i]).iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut updated = Matrix::zeros(k, d);
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed at the point worst served by its current centroid.
                let far = (0..n).fold(0, |best, i| if dist[i] > dist[best] { i } else { best });
                updated.row_mut(c).copy_from_slice(data.row(far));
                dist[far] = 0.0;
            } else {
                for (u, s) in updated.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *u = s / counts[c] as f64;
                }
            }
        }
        let movement = (0..k)
            .map(|c| sq_dist(centroids.row(c), updated.row(c)).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        if movement < TOLERANCE {
            break;
        }
    }

    let mut counts = vec![0usize; k];
    for p in data.row_iter() {
        counts[nearest(p, &centroids).0] += 1;
    }
    let kept: Vec<usize> = (0..k).filter(|&c| counts[c] > 0).collect();
    let weights = kept.iter().map(|&c| counts[c] as f64 / n as f64).collect();
    BackgroundSet::new(centroids.select_rows(&kept), weights, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    #[test]
    fn single_cluster_is_the_mean() {
        let data = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]]).unwrap();
        let bg = kmeans_summarize(&data, 1, 4).unwrap();
        assert_eq!(bg.weights, vec![1.0]);
        assert!((bg.points.get(0, 0) - 3.0).abs() < 1e-12);
        assert!((bg.points.get(0, 1) - 3.0).abs() < 1e-12);
        assert_eq!(bg.source_count, 3);
    }

    #[test]
    fn k_equals_n_returns_the_points() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let data = Matrix::from_rows(&rows).unwrap();
        let bg = kmeans_summarize(&data, 6, 1).unwrap();
        assert_eq!(bg.len(), 6);
        let mut got: Vec<Vec<f64>> = bg.points.row_iter().map(<[f64]>::to_vec).collect();
        got.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(got, rows);
        assert!(bg.weights.iter().all(|&w| (w - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn recovers_two_blobs() {
        let mut rng = rng_from_seed(21);
        let centers = [[0.0, 0.0, 0.0], [8.0, -6.0, 4.0]];
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let c = &centers[i % 2];
                c.iter()
                    .map(|m| m + 0.5 * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let bg = kmeans_summarize(&Matrix::from_rows(&rows).unwrap(), 2, 3).unwrap();
        assert_eq!(bg.len(), 2);
        for c in &centers {
            let best = bg
                .points
                .row_iter()
                .map(|p| sq_dist(p, c).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.2, "centroid off by {best}");
        }
        assert!((bg.weights[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_validated() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, (i % 3) as f64]).collect();
        let data = Matrix::from_rows(&rows).unwrap();
        assert_eq!(
            kmeans_summarize(&data, 4, 9).unwrap(),
            kmeans_summarize(&data, 4, 9).unwrap()
        );
        assert!(kmeans_summarize(&data, 41, 0).is_err());
        assert!(kmeans_summarize(&data, 0, 0).is_err());
        let w: f64 = kmeans_summarize(&data, 5, 2).unwrap().weights.iter().sum();
        assert!((w - 1.0).abs() < 1e-9);
    }

    #[test]
    fn duplicate_points_do_not_break_seeding() {
        let data = Matrix::from_rows(&vec![vec![1.0, 1.0]; 5]).unwrap();
        let bg = kmeans_summarize(&data, 3, 0).unwrap();
        assert_eq!(bg.len(), 1);
        assert_eq!(bg.weights, vec![1.0]);
    }
}
