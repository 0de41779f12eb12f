use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

const MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, m) in centroids.iter().enumerate() {
        let d = dist2(p, m);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn lloyd(points: &[Vec<f64>], k: usize, seed: u64, restart: usize) -> KMeansFit {
    let mut rng = rng_for(seed, &[stream::KMEANS, restart as u64]);
    let n = points.len();
    // k-means++ seeding
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, centroids.last().unwrap()));
        }
    }
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let c = nearest(p, &centroids).0;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                // re-seed an empty cluster at the point farthest from its centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        dist2(&points[a], &centroids[labels[a]]).total_cmp(&dist2(&points[b], &centroids[labels[b]]))
                    })
                    .unwrap();
                centroids[c] = points[far].clone();
            }
        }
    }
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (c, d) = nearest(p, &centroids);
        labels[i] = c;
        inertia += d;
    }
    KMeansFit { centroids, labels, inertia }
}

/// Lloyd's algorithm with k-means++ seeding; the restart with the lowest
/// inertia wins (earliest restart on ties).
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<KMeansFit> {
    if points.is_empty() || k == 0 || k > points.len() {
        return Err(Error::invalid("k", format!("need 1 <= k <= {} points", points.len())));
    }
    let fits: Vec<KMeansFit> = (0..restarts.max(1)).into_par_iter().map(|r| lloyd(points, k, seed, r)).collect();
    Ok(fits
        .into_iter()
        .reduce(|best, f| if f.inertia < best.inertia { f } else { best })
        .expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_obvious_clusters() {
        let mut pts = Vec::new();
        for i in 0..30 {
            let t = i as f64 * 0.01;
            pts.push(vec![t, t]);
            pts.push(vec![10.0 + t, 10.0 - t]);
            pts.push(vec![-10.0 - t, 5.0]);
        }
        let fit = kmeans(&pts, 3, 5, 1).unwrap();
        for g in 0..3 {
            let first = fit.labels[g];
            assert!((0..30).all(|i| fit.labels[3 * i + g] == first));
        }
        assert_eq!(fit, kmeans(&pts, 3, 5, 1).unwrap());
        assert!(kmeans(&pts, 91, 1, 0).is_err());
    }
}
